"""
Minimizing-movement (JKO) scheme for the free energy on the circle.

Each step minimizes Psi(rho) = d_per^2(prev, rho) / (2 tau) + F(rho) over
gap-free cell measures. The inner solver works in node coordinates with
a damped Newton direction and Armijo backtracking; stopping is measured
in the (base, z) parametrization h = 2 pi softmax(z).
"""

import dataclasses
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy.linalg import LinAlgError, cho_factor, cho_solve

from measure import (
    TWO_PI, AtomMeasure, CellMeasure, atoms_of, cells_from_lifts, uniform_measure
)
from circot import (
    QuantileLift, as_lift, dper2_lifts, dper2_quantile, generalized_maps,
    max_displacement, optimal_shift, shift_derivative, shift_gradient
)
from energy import EnergyReport, free_energy, node_energy
from utils.logger import get_logger


THETA_FD_STEP = 1e-6
MAX_BACKTRACKS = 60


class NonConvergenceError(RuntimeError):
    """A step failed to converge even after the allowed tau halvings."""

    def __init__(self, step_index: int, grad_norm: float, tau: float):
        self.step_index = step_index
        self.grad_norm = grad_norm
        self.tau = tau
        super().__init__(
            f"step {step_index} did not converge (gradient norm {grad_norm:.3e} at tau {tau:.3g})"
        )


@dataclass
class InnerConfig:
    method: str = 'newton'
    max_iter: int = 500
    grad_tol: float = 1e-9
    armijo_c: float = 1e-4
    armijo_shrink: float = 0.5
    step_init: Optional[float] = None

    def __post_init__(self):
        if self.method not in ('newton', 'gradient'):
            raise ValueError("inner method must be 'newton' or 'gradient'")
        if self.grad_tol <= 0.0:
            raise ValueError("grad_tol must be > 0")
        if not 0.0 < self.armijo_shrink < 1.0:
            raise ValueError("armijo_shrink must lie in (0, 1)")


@dataclass
class SolverConfig:
    """Parameters of one minimizing-movement run."""

    nu: float = 0.1
    tau: float = 0.02
    t_end: float = 5.0
    N: int = 128
    coeff: float = 0.5
    inner: InnerConfig = field(default_factory=InnerConfig)
    seed: int = 0
    restarts: int = 0
    max_halvings: int = 3

    def __post_init__(self):
        if self.nu < 0.0:
            raise ValueError("nu must be >= 0")
        if self.tau <= 0.0:
            raise ValueError("tau must be > 0")
        if self.t_end < self.tau:
            raise ValueError("t_end must be >= tau")
        if self.N < 2:
            raise ValueError("N must be >= 2")
        if self.coeff not in (0.5, 1.0):
            raise ValueError("coeff must be 0.5 or 1")

    def replace(self, **changes) -> 'SolverConfig':
        return dataclasses.replace(self, **changes)

    @classmethod
    def from_values(cls, values: Dict) -> 'SolverConfig':
        """Build from a flat experiment dictionary."""
        inner = InnerConfig(
            method=values['inner_method'],
            max_iter=int(values['max_iter']),
            grad_tol=float(values['grad_tol']),
            armijo_c=float(values['armijo_c']),
            armijo_shrink=float(values['armijo_shrink']),
            step_init=values.get('step_init'),
        )
        return cls(
            nu=float(values['nu']),
            tau=float(values['tau']),
            t_end=float(values['t_end']),
            N=int(values['N']),
            coeff=float(values['coeff']),
            inner=inner,
            seed=int(values['seed']),
            restarts=int(values['restarts']),
            max_halvings=int(values['max_halvings']),
        )


@dataclass
class StepResult:
    measure: CellMeasure
    converged: bool
    iterations: int
    grad_norm: float
    objective: float
    max_displacement: float


@dataclass
class FlowTrajectory:
    """Recorded minimizing-movement solution mu_tau(t)."""

    tau: float
    nu: float
    coeff: float
    times: List[float] = field(default_factory=list)
    snapshots: List[CellMeasure] = field(default_factory=list)
    energies: List[EnergyReport] = field(default_factory=list)
    step_costs: List[float] = field(default_factory=list)
    inner_iterations: List[int] = field(default_factory=list)
    halvings: List[int] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.times)

    def append(self, t: float, m: CellMeasure, cost: float, iterations: int, halvings: int) -> None:
        self.times.append(t)
        self.snapshots.append(m)
        self.energies.append(free_energy(m, self.nu, self.coeff))
        self.step_costs.append(cost)
        self.inner_iterations.append(iterations)
        self.halvings.append(halvings)

    @property
    def totals(self) -> np.ndarray:
        return np.array([e.total for e in self.energies])

    def dist_to_minimizer(self) -> np.ndarray:
        """d_per from each snapshot to the uniform measure."""
        ref = uniform_measure(self.snapshots[-1].N)
        return np.sqrt([dper2_quantile(m, ref) for m in self.snapshots])

    def at_time(self, t: float) -> CellMeasure:
        """Piecewise-constant interpolant: the snapshot k with k tau <= t < (k+1) tau."""
        k = int(np.floor(t / self.tau + 1e-9))
        return self.snapshots[min(max(k, 0), len(self.snapshots) - 1)]

    def decay_violations(self, slack: float = 1e-8) -> List[int]:
        """Steps k where F(mu^k) > F(mu^{k-1}) - d^2(mu^{k-1}, mu^k) / (2 tau) + slack."""
        totals = self.totals
        bad = []
        for k in range(1, len(totals)):
            if totals[k] > totals[k - 1] - self.step_costs[k] / (2.0 * self.tau) + slack:
                bad.append(k)
        return bad


class StepObjective:
    """Psi on gap-free candidates given by lifted nodes X_0..X_{N-1}."""

    def __init__(self, tau: float, prev: CellMeasure, nu: float, coeff: float):
        self.tau = tau
        self.nu = nu
        self.coeff = coeff
        self.target = as_lift(prev)
        self.theta: Optional[float] = 0.0
        self._last: Optional[Tuple[np.ndarray, float, np.ndarray, QuantileLift, float]] = None

    def evaluate(self, nodes: np.ndarray, hessian: bool = False):
        """
        Value, node gradient and optionally the Newton Hessian.

        Returns (inf, None, None) for candidates with a non-positive spacing.
        The last feasible evaluation is cached.
        """
        if self._last is not None and np.array_equal(self._last[0], nodes):
            value, grad = self._last[1], self._last[2]
        else:
            F, gF, _ = node_energy(nodes, self.nu, self.coeff, hessian=False)
            if not np.isfinite(F):
                return np.inf, None, None
            X = QuantileLift.from_nodes(nodes)
            theta, cost = optimal_shift(X, self.target, hint=self.theta)
            self.theta = theta
            value = cost / (2.0 * self.tau) + F
            grad = self._transport_gradient(X, theta) / (2.0 * self.tau) + gF
            self._last = (np.array(nodes, dtype=float), value, grad, X, theta)
        if not hessian:
            return value, grad, None
        return value, grad, self.newton_hessian(nodes)

    def value(self, nodes: np.ndarray) -> float:
        return self.evaluate(nodes)[0]

    def _lift_at(self, nodes: np.ndarray) -> Tuple[QuantileLift, float]:
        if self._last is not None and np.array_equal(self._last[0], nodes):
            return self._last[3], self._last[4]
        X = QuantileLift.from_nodes(nodes)
        theta, _ = optimal_shift(X, self.target, hint=self.theta)
        return X, theta

    def max_displacement(self, nodes: np.ndarray) -> float:
        X, theta = self._lift_at(nodes)
        return max_displacement(X, self.target, theta)

    def _transport_gradient(self, X: QuantileLift, theta: float) -> np.ndarray:
        d_left, d_right = shift_gradient(X, self.target, theta)
        return d_left + np.roll(d_right, 1)

    def _transport_hessian(self, X: QuantileLift, theta: float, schur: bool) -> np.ndarray:
        N = X.left.size
        i = np.arange(N)
        j = (i + 1) % N
        # P1 mass matrix of the periodic hat functions, scaled by 2
        H = np.diag(np.full(N, 4.0 / (3.0 * N)))
        H[i, j] += 1.0 / (3.0 * N)
        H[j, i] += 1.0 / (3.0 * N)
        if not schur:
            return H
        # the cut parameter is re-optimized, so curvature along it is removed
        delta = THETA_FD_STEP
        b = (self._transport_gradient(X, theta + delta)
             - self._transport_gradient(X, theta - delta)) / (2.0 * delta)
        g_tt = (shift_derivative(X, self.target, theta + delta)
                - shift_derivative(X, self.target, theta - delta)) / (2.0 * delta)
        if g_tt > 1e-10:
            H = H - np.outer(b, b) / g_tt
        return H

    def newton_hessian(self, nodes: np.ndarray, schur: bool = True) -> np.ndarray:
        _, _, HF = node_energy(nodes, self.nu, self.coeff, hessian=True)
        X, theta = self._lift_at(nodes)
        return self._transport_hessian(X, theta, schur) / (2.0 * self.tau) + HF


def nodes_from_parameters(cand: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Decode (base, z) into lifted nodes and spacings h = 2 pi softmax(z)."""
    base = float(cand[0])
    z = np.asarray(cand[1:], dtype=float)
    e = np.exp(z - np.max(z))
    h = TWO_PI * e / np.sum(e)
    nodes = base + np.concatenate(([0.0], np.cumsum(h[:-1])))
    return nodes, h


def parameters_of(m: CellMeasure) -> np.ndarray:
    """Encode a gap-free measure as (base, log spacings)."""
    return np.concatenate(([m.base], np.log(m.spacings)))


def parameter_gradient(node_grad: np.ndarray, h: np.ndarray) -> np.ndarray:
    """Chain a node gradient to the (base, z) coordinates."""
    g_base = np.sum(node_grad)
    tail = np.concatenate((np.cumsum(node_grad[::-1])[::-1][1:], [0.0]))
    g_z = h * tail - (h / TWO_PI) * np.dot(h, tail)
    return np.concatenate(([g_base], g_z))


def jko_objective(
    tau: float,
    prev: CellMeasure,
    cand: np.ndarray,
    nu: float = 0.0,
    coeff: float = 0.5
) -> Tuple[float, np.ndarray]:
    """
    Psi(cand) = d_per^2(prev, cand) / (2 tau) + F_nu(cand) and its gradient.

    Args:
        tau: Time step
        prev: Previous measure
        cand: Parameter vector (base, z_0, ..., z_{N-1})
        nu: Viscosity
        coeff: Interaction normalization

    Returns:
        Tuple of (value, gradient in (base, z)); value is inf for degenerate candidates
    """
    nodes, h = nodes_from_parameters(cand)
    objective = StepObjective(tau, prev, nu, coeff)
    value, grad, _ = objective.evaluate(nodes)
    if grad is None:
        return np.inf, np.full(np.size(cand), np.nan)
    return value, parameter_gradient(grad, h)


def _feasible_step(nodes: np.ndarray, direction: np.ndarray) -> float:
    """Largest step keeping every spacing positive, with a safety margin."""
    ext = np.append(nodes, nodes[0] + TWO_PI)
    dext = np.append(direction, direction[0])
    h = np.diff(ext)
    dh = np.diff(dext)
    shrinking = dh < 0.0
    if not np.any(shrinking):
        return np.inf
    return 0.95 * float(np.min(-h[shrinking] / dh[shrinking]))


class FlowSolver:
    """Minimizing-movement driver for one SolverConfig."""

    def __init__(self, config: SolverConfig):
        """
        Initialize flow solver.

        Args:
            config: Solver parameters
        """
        self.config = config
        self.logger = get_logger()

    @property
    def tolerance(self) -> float:
        return self.config.inner.grad_tol * np.sqrt(self.config.N)

    def _stationarity(self, grad: np.ndarray, nodes: np.ndarray) -> float:
        h = np.diff(np.append(nodes, nodes[0] + TWO_PI))
        return float(np.max(np.abs(parameter_gradient(grad, h))))

    def _newton_direction(self, objective: StepObjective, nodes, grad, hess) -> np.ndarray:
        candidates = [hess, lambda: objective.newton_hessian(nodes, schur=False)]
        for H in candidates:
            if callable(H):
                H = H()
            shift = 0.0
            scale = max(np.trace(H) / H.shape[0], 1e-12)
            for _ in range(6):
                try:
                    factor = cho_factor(H + shift * np.eye(H.shape[0]))
                except (LinAlgError, ValueError):
                    shift = max(10.0 * shift, 1e-10 * scale)
                    continue
                direction = -cho_solve(factor, grad)
                if np.all(np.isfinite(direction)) and np.dot(grad, direction) < 0.0:
                    return direction
                break
        return -grad

    def _minimize(self, objective: StepObjective, nodes: np.ndarray, tau: float):
        """Run the inner descent from nodes; returns (nodes, value, grad_norm, iterations)."""
        inner = self.config.inner
        newton = inner.method == 'newton'
        value, grad, _ = objective.evaluate(nodes)
        hess = None
        norm = self._stationarity(grad, nodes)
        step0 = inner.step_init if inner.step_init else tau
        iterations = 0

        while norm > self.tolerance and iterations < inner.max_iter:
            iterations += 1
            if newton:
                if hess is None:
                    hess = objective.newton_hessian(nodes)
                direction = self._newton_direction(objective, nodes, grad, hess)
                t = 1.0
            else:
                direction = -grad
                t = step0
            t = min(t, _feasible_step(nodes, direction))
            slope = float(np.dot(grad, direction))

            accepted = False
            for _ in range(MAX_BACKTRACKS):
                trial = nodes + t * direction
                t_value, t_grad, _ = objective.evaluate(trial)
                if t_grad is not None:
                    if t_value <= value + inner.armijo_c * t * slope:
                        accepted = True
                    elif t_value <= value + 1e-13 * (1.0 + abs(value)):
                        accepted = self._stationarity(t_grad, trial) < norm
                if accepted:
                    break
                t *= inner.armijo_shrink

            if not accepted:
                break
            nodes, value, grad, hess = trial, t_value, t_grad, None
            norm = self._stationarity(grad, nodes)
            if not newton:
                step0 = min(2.0 * t, 1e3 * tau)

        return nodes, value, norm, iterations

    def step(self, prev: CellMeasure, tau: Optional[float] = None, step_index: int = 0) -> StepResult:
        """
        One minimizing-movement step from prev.

        Args:
            prev: Previous measure (gapped measures are warm-started gap-filled)
            tau: Step size (defaults to config.tau)
            step_index: Used to seed optional restarts

        Returns:
            StepResult
        """
        tau = tau or self.config.tau
        objective = StepObjective(tau, prev, self.config.nu, self.config.coeff)
        warm = prev.gap_filled()
        start = warm.nodes
        start_value = objective.value(start)

        nodes, value, norm, iterations = self._minimize(objective, start, tau)

        if self.config.restarts > 0:
            rng = np.random.default_rng(self.config.seed + step_index)
            for _ in range(self.config.restarts):
                h = np.diff(np.append(nodes, nodes[0] + TWO_PI))
                z = np.log(h) + 0.05 * rng.standard_normal(h.size)
                perturbed, _ = nodes_from_parameters(np.concatenate(([nodes[0]], z)))
                r_nodes, r_value, r_norm, r_iter = self._minimize(objective, perturbed, tau)
                iterations += r_iter
                if r_value < value:
                    nodes, value, norm = r_nodes, r_value, r_norm

        if value > start_value:
            self.logger.warning(f"Uphill result rejected at step {step_index}")
            nodes, value = start, start_value
            norm = self._stationarity(objective.evaluate(start)[1], start)

        converged = bool(norm <= 10.0 * self.tolerance)

        return StepResult(
            measure=warm if nodes is start else CellMeasure.from_nodes(nodes),
            converged=converged,
            iterations=iterations,
            grad_norm=norm,
            objective=value,
            max_displacement=objective.max_displacement(nodes),
        )

    def _advance(self, prev: CellMeasure, tau: float, step_index: int, depth: int):
        result = self.step(prev, tau, step_index)
        if result.converged and result.max_displacement < np.pi:
            return result.measure, result.iterations, 0

        reason = 'displacement guard' if result.converged else 'non-convergence'
        if depth >= self.config.max_halvings:
            self.logger.error(f"Step {step_index}: {reason} persists after {depth} halvings")
            raise NonConvergenceError(step_index, result.grad_norm, tau)

        self.logger.warning(f"Step {step_index}: {reason}, halving tau to {tau / 2:.4g}")
        mid, it1, h1 = self._advance(prev, tau / 2.0, step_index, depth + 1)
        end, it2, h2 = self._advance(mid, tau / 2.0, step_index, depth + 1)
        return end, it1 + it2, 1 + max(h1, h2)

    def evolve(self, m0: CellMeasure) -> FlowTrajectory:
        """
        Iterate steps up to t_end, recording snapshots and diagnostics.

        Args:
            m0: Initial measure

        Returns:
            FlowTrajectory
        """
        cfg = self.config
        n_steps = int(np.ceil(cfg.t_end / cfg.tau - 1e-9))
        traj = FlowTrajectory(cfg.tau, cfg.nu, cfg.coeff)
        traj.append(0.0, m0, 0.0, 0, 0)

        current = m0
        for k in range(1, n_steps + 1):
            new, iterations, halvings = self._advance(current, cfg.tau, k, 0)
            cost = dper2_quantile(current, new)
            traj.append(k * cfg.tau, new, cost, iterations, halvings)
            self.logger.log_step({
                'k': k,
                't': k * cfg.tau,
                'energy': traj.energies[-1].total,
                'step_cost': cost,
                'iterations': iterations,
                'halvings': halvings,
            })
            current = new

        return traj


def jko_step(tau: float, prev: CellMeasure, config: SolverConfig) -> CellMeasure:
    """Minimizer of Psi(tau, prev; .); raises NonConvergenceError on failure."""
    solver = FlowSolver(config)
    return solver._advance(prev, tau, 1, 0)[0]


def evolve(m0: CellMeasure, config: SolverConfig) -> FlowTrajectory:
    """Minimizing-movement trajectory from m0 up to config.t_end."""
    return FlowSolver(config).evolve(m0)


def minimizer(config: SolverConfig) -> CellMeasure:
    """The unique minimizer of the free energy, the uniform measure."""
    return uniform_measure(config.N)


def _snapshot_distance(a: CellMeasure, b: CellMeasure) -> float:
    return float(np.sqrt(dper2_quantile(a, b)))


def error_bound_check(
    m0: CellMeasure,
    nu: float,
    tau: float,
    t_end: float,
    config: Optional[SolverConfig] = None,
    fine_factor: int = 8
) -> dict:
    """
    Compare runs at tau and tau / fine_factor against tau (F(m0) + 2 pi nu / e).

    Args:
        m0: Initial measure with finite free energy
        nu: Viscosity
        tau: Coarse step
        t_end: Horizon
        config: Base configuration for the remaining parameters
        fine_factor: Refinement of the reference run

    Returns:
        Report dictionary
    """
    base = (config or SolverConfig(N=m0.N)).replace(nu=nu, tau=tau, t_end=t_end)
    f0 = free_energy(m0, nu, base.coeff).total
    if not np.isfinite(f0):
        raise ValueError("initial free energy must be finite")

    coarse = evolve(m0, base)
    fine = evolve(m0, base.replace(tau=tau / fine_factor))
    gaps = [
        dper2_quantile(coarse.snapshots[k], fine.snapshots[min(k * fine_factor, len(fine) - 1)])
        for k in range(len(coarse))
    ]
    sup = float(max(gaps))
    bound = tau * (f0 + TWO_PI * nu / np.e)
    return {
        'tau': tau,
        'nu': nu,
        'sup_dist2': sup,
        'bound': bound,
        'passed': sup <= bound,
    }


def contraction_check(
    m0: CellMeasure,
    r0: CellMeasure,
    config: SolverConfig,
    slack: float = 1e-4
) -> dict:
    """Evolve two data and assert d_per(mu_t, rho_t) <= d_per(mu_0, rho_0) + slack."""
    traj_m = evolve(m0, config)
    traj_r = evolve(r0, config)
    dists = [_snapshot_distance(a, b) for a, b in zip(traj_m.snapshots, traj_r.snapshots)]
    initial = dists[0]
    worst = float(max(dists))
    return {
        'initial_distance': initial,
        'max_distance': worst,
        'distances': dists,
        'slack': slack,
        'passed': worst <= initial + slack,
    }


def inviscid_sweep(
    m0: CellMeasure,
    nus: Sequence[float],
    config: SolverConfig,
    slack: float = 0.2
) -> dict:
    """
    e(nu) = sup_t d_per(mu_t^nu, mu_t^0) along a decreasing list of viscosities ending at 0.

    Passes when e is non-increasing along the list up to a relative slack per pair.
    """
    nus = [float(v) for v in nus]
    if not nus or nus[-1] != 0.0 or any(a <= b for a, b in zip(nus, nus[1:])):
        raise ValueError("nus must be strictly decreasing and end at 0")

    runs = [evolve(m0, config.replace(nu=nu)) for nu in nus]
    reference = runs[-1]
    errors = []
    for run in runs:
        errors.append(max(
            _snapshot_distance(a, b) for a, b in zip(run.snapshots, reference.snapshots)
        ))
    pairs = [errors[i + 1] <= (1.0 + slack) * errors[i] for i in range(len(errors) - 1)]
    return {
        'nus': nus,
        'errors': errors,
        'pairwise': pairs,
        'passed': all(pairs),
    }


def energy_gap_check(traj: FlowTrajectory, slack: float = 1e-6) -> dict:
    """Rate check F(mu(t)) - F(mu_bar) <= d^2(mu_0, mu_bar) / (2 t) for recorded t > 0."""
    ref = uniform_measure(traj.snapshots[-1].N)
    f_min = free_energy(ref, traj.nu, traj.coeff).total
    d0 = dper2_quantile(traj.snapshots[0], ref)
    worst = -np.inf
    for t, energy in zip(traj.times[1:], traj.energies[1:]):
        worst = max(worst, energy.total - f_min - d0 / (2.0 * t))
    return {'worst_margin': float(worst), 'passed': bool(worst <= slack)}


def psi_at_lifts(tau: float, w: AtomMeasure, lifts: np.ndarray, nu: float, coeff: float = 0.5) -> float:
    """
    Psi at the N lifted atoms: dper2(w, atoms) / (2 tau) + F of their mollified cells.

    Coincident lifts count with multiplicity in the transport term.
    """
    transport = dper2_lifts(w, lifts)
    return transport / (2.0 * tau) + free_energy(cells_from_lifts(lifts), nu, coeff).total


def psi_along_generalized_geodesic(
    tau: float,
    prev: CellMeasure,
    m0: CellMeasure,
    m1: CellMeasure,
    ts: Sequence[float],
    nu: float,
    coeff: float = 0.5
) -> Tuple[np.ndarray, float]:
    """
    Psi along the generalized geodesic from m0 to m1 based at the atoms of prev.

    The transport term uses the atom systems; the energy is evaluated on the
    cells mollifying the interpolated lifted atoms.

    Returns:
        Tuple of (Psi values at ts, d_gamma^2)
    """
    w = atoms_of(prev)
    _, lift0, lift1 = generalized_maps(w, atoms_of(m0), atoms_of(m1))
    values = [psi_at_lifts(tau, w, (1.0 - t) * lift0 + t * lift1, nu, coeff) for t in ts]
    return np.array(values), float(np.mean((lift0 - lift1) ** 2))


def psi_convexity_check(
    tau: float,
    prev: CellMeasure,
    m0: CellMeasure,
    m1: CellMeasure,
    nu: float,
    coeff: float = 0.5,
    ts: Sequence[float] = (0.25, 0.5, 0.75),
    slack: float = 1e-6
) -> Tuple[bool, float]:
    """
    Psi(mu_t) <= (1-t) Psi(mu_0) + t Psi(mu_1) - t (1-t) d_gamma^2 / (2 tau) + slack.

    Returns:
        Tuple of (passed, largest violation)
    """
    values, dgamma2 = psi_along_generalized_geodesic(
        tau, prev, m0, m1, [0.0, 1.0] + list(ts), nu, coeff
    )
    psi0, psi1 = values[0], values[1]
    worst = -np.inf
    for t, value in zip(ts, values[2:]):
        bound = (1.0 - t) * psi0 + t * psi1 - t * (1.0 - t) * dgamma2 / (2.0 * tau)
        worst = max(worst, value - bound)
    return bool(worst <= slack), float(worst)
