"""
Optimal transport on the circle with squared geodesic cost.

Equal-weight atom systems are matched by scanning the N cyclic shifts
of the sorted order. General measures are compared through their lifted
quantile functions, minimizing over the cut parameter theta.
"""

import itertools
from dataclasses import dataclass
from typing import Optional, Tuple, Union

import numpy as np
from scipy.optimize import brentq, linear_sum_assignment, linprog, minimize_scalar

from measure import TWO_PI, AtomMeasure, CellMeasure, point_dist, wrap


EXHAUSTIVE_MAX_N = 10
THETA_BRACKET = 3.0


@dataclass(frozen=True, eq=False)
class TransportPlan:
    """Optimal cyclic-shift matching between two equal-weight atom systems."""

    n: int
    shift: int
    sources: np.ndarray
    lifted_targets: np.ndarray
    displacements: np.ndarray
    cost: float

    @property
    def max_displacement(self) -> float:
        return float(np.max(np.abs(self.displacements)))

    def to_dict(self) -> dict:
        """JSON-ready representation."""
        return {
            'n': self.n,
            'shift': self.shift,
            'sources': self.sources.tolist(),
            'lifted_targets': self.lifted_targets.tolist(),
            'displacements': self.displacements.tolist(),
            'cost': self.cost,
        }


def _require_equal_weights(a: AtomMeasure, b: AtomMeasure) -> None:
    if a.N != b.N:
        raise ValueError(f"atom counts differ ({a.N} vs {b.N})")
    if not (a.has_equal_weights and b.has_equal_weights):
        raise ValueError("equal weights required; use dper2_quantile for general weights")


def _shift_scan(x: np.ndarray, y: np.ndarray) -> Tuple[int, np.ndarray]:
    """Best cyclic shift k of sorted targets y against sorted sources x, and the lifted targets."""
    N = x.size
    idx = (np.arange(N)[:, None] + np.arange(N)[None, :]) % N
    steps = wrap(y[idx] - x[None, :])
    costs = np.mean(steps ** 2, axis=1)
    k = int(np.argmin(costs))
    return k, x + steps[k]


def dper2(a: AtomMeasure, b: AtomMeasure) -> Tuple[float, TransportPlan]:
    """
    Squared periodic Wasserstein distance between equal-weight atom systems.

    Atom i of a is matched to atom (i + k) mod N of b for the best cyclic
    shift k. Each pair travels along its shorter arc; antipodal pairs move
    in the negative direction.

    Args:
        a: Source atoms (N atoms of weight 1/N)
        b: Target atoms (N atoms of weight 1/N)

    Returns:
        Tuple of (cost, plan)
    """
    _require_equal_weights(a, b)
    x = a.positions
    k, lifted = _shift_scan(x, b.positions)
    disp = x - lifted
    cost = float(np.mean(disp ** 2))
    return cost, TransportPlan(a.N, k, x.copy(), lifted, disp, cost)


def dper2_lifts(a: AtomMeasure, lifts) -> float:
    """
    Squared distance from equal-weight atoms to N equal-weight atoms at lifts.

    Coincident lifts keep their multiplicity, so the target may hold atoms
    of weight k/N. AtomMeasure would merge them into fewer atoms.

    Args:
        a: Source atoms (N atoms of weight 1/N)
        lifts: N target positions, lifted or wrapped, ties allowed

    Returns:
        Squared distance
    """
    y = np.sort(wrap(np.asarray(lifts, dtype=float)))
    if y.size != a.N:
        raise ValueError(f"atom counts differ ({a.N} vs {y.size})")
    if not a.has_equal_weights:
        raise ValueError("equal weights required; use dper2_quantile for general weights")
    x = a.positions
    _, lifted = _shift_scan(x, y)
    return float(np.mean((x - lifted) ** 2))


def dper2_oracle(a: AtomMeasure, b: AtomMeasure, mode: str = 'assignment') -> float:
    """
    Kantorovich optimal cost by methods independent of the shift scan.

    Args:
        a: Source atoms
        b: Target atoms
        mode: 'exhaustive' (all N! matchings, N <= 10), 'assignment'
            (linear assignment on the cost matrix) or 'lp' (transport
            linear program, any weights)

    Returns:
        Optimal cost
    """
    cost = point_dist(a.positions[:, None], b.positions[None, :]) ** 2

    if mode == 'lp':
        n, m = cost.shape
        rows = np.kron(np.eye(n), np.ones((1, m)))
        cols = np.kron(np.ones((1, n)), np.eye(m))
        result = linprog(
            cost.ravel(),
            A_eq=np.vstack((rows, cols)),
            b_eq=np.concatenate((a.weights, b.weights)),
            bounds=(0, None),
            method='highs'
        )
        if not result.success:
            raise RuntimeError(f"transport LP failed: {result.message}")
        return float(result.fun)

    _require_equal_weights(a, b)
    N = a.N

    if mode == 'exhaustive':
        if N > EXHAUSTIVE_MAX_N:
            raise ValueError(f"exhaustive mode supports N <= {EXHAUSTIVE_MAX_N}")
        best = np.inf
        rows = np.arange(N)
        perms = itertools.permutations(range(N))
        while True:
            chunk = np.array(list(itertools.islice(perms, 50000)))
            if chunk.size == 0:
                break
            best = min(best, float(np.min(cost[rows, chunk].sum(axis=1))))
        return best / N

    if mode == 'assignment':
        r, c = linear_sum_assignment(cost)
        return float(cost[r, c].sum()) / N

    raise ValueError(f"unknown oracle mode: {mode}")


@dataclass(frozen=True, eq=False)
class QuantileLift:
    """
    Lifted quantile function of a circle measure on mass levels [0, 1].

    Piece k covers [levels[k], levels[k+1]] and rises linearly from left[k]
    to right[k]; jumps between pieces are mass-free arcs. The periodic
    extension satisfies X(s + 1) = X(s) + 2*pi.
    """

    levels: np.ndarray
    left: np.ndarray
    right: np.ndarray

    @classmethod
    def from_cells(cls, m: CellMeasure) -> 'QuantileLift':
        return cls(np.arange(m.N + 1) / m.N, m.lefts, m.rights)

    @classmethod
    def from_nodes(cls, nodes: np.ndarray) -> 'QuantileLift':
        """Gap-free lift with free endpoints X_0..X_{N-1} and X_N = X_0 + 2*pi."""
        ext = np.append(nodes, nodes[0] + TWO_PI)
        return cls(np.arange(nodes.size + 1) / nodes.size, ext[:-1], ext[1:])

    @classmethod
    def from_atoms(cls, a: AtomMeasure) -> 'QuantileLift':
        keep = a.weights > 0.0
        pos = a.positions[keep]
        cum = np.concatenate(([0.0], np.cumsum(a.weights[keep])))
        cum[-1] = 1.0
        return cls(cum, pos, pos)

    @property
    def widths(self) -> np.ndarray:
        return np.diff(self.levels)

    @property
    def slopes(self) -> np.ndarray:
        return (self.right - self.left) / self.widths

    def piece_index(self, s: np.ndarray) -> np.ndarray:
        return np.clip(np.searchsorted(self.levels, s, side='right') - 1, 0, self.left.size - 1)

    def evaluate(self, s):
        """Right-continuous evaluation of the periodic extension."""
        s = np.asarray(s, dtype=float)
        turns = np.floor(s)
        frac = s - turns
        k = self.piece_index(frac)
        return self.left[k] + self.slopes[k] * (frac - self.levels[k]) + TWO_PI * turns

    def jumps(self):
        """Levels of upward jumps of the periodic extension, with one-sided limits."""
        before = np.concatenate(([self.right[-1] - TWO_PI], self.right[:-1]))
        size = self.left - before
        mask = size > 1e-12
        return self.levels[:-1][mask], before[mask], self.left[mask]


MeasureLike = Union[CellMeasure, AtomMeasure, QuantileLift]


def as_lift(m: MeasureLike) -> QuantileLift:
    if isinstance(m, QuantileLift):
        return m
    if isinstance(m, CellMeasure):
        return QuantileLift.from_cells(m)
    if isinstance(m, AtomMeasure):
        return QuantileLift.from_atoms(m)
    raise TypeError(f"cannot lift {type(m).__name__}")


@dataclass
class _Pieces:
    length: np.ndarray
    lam0: np.ndarray
    lam1: np.ndarray
    kx: np.ndarray
    d0: np.ndarray
    d1: np.ndarray
    slope_y: np.ndarray


def _pieces(X: QuantileLift, Y: QuantileLift, theta: float) -> _Pieces:
    """Split [0, 1] where X and the shifted Y_theta are both linear."""
    shifted = np.mod(Y.levels[:-1] - theta, 1.0)
    bps = np.unique(np.concatenate((X.levels, shifted, [0.0, 1.0])))
    bps = bps[(bps >= 0.0) & (bps <= 1.0)]
    p, q = bps[:-1], bps[1:]
    keep = q - p > 1e-16
    p, q = p[keep], q[keep]
    mid = 0.5 * (p + q)

    kx = X.piece_index(mid)
    x_w = X.widths[kx]
    lam0 = (p - X.levels[kx]) / x_w
    lam1 = (q - X.levels[kx]) / x_w
    x0 = X.left[kx] + (X.right[kx] - X.left[kx]) * lam0
    x1 = X.left[kx] + (X.right[kx] - X.left[kx]) * lam1

    u = mid + theta
    turns = np.floor(u)
    ky = Y.piece_index(u - turns)
    slope_y = Y.slopes[ky]
    y_base = Y.left[ky] + TWO_PI * turns - slope_y * (Y.levels[ky] + turns - theta)
    y0 = y_base + slope_y * p
    y1 = y_base + slope_y * q

    return _Pieces(q - p, lam0, lam1, kx, x0 - y0, x1 - y1, slope_y)


def shift_cost(X: QuantileLift, Y: QuantileLift, theta: float) -> float:
    """Integral over [0, 1] of |X(s) - Y(s + theta)|^2."""
    pc = _pieces(X, Y, theta)
    return float(np.sum(pc.length * (pc.d0 ** 2 + pc.d0 * pc.d1 + pc.d1 ** 2)) / 3.0)


def shift_derivative(X: QuantileLift, Y: QuantileLift, theta: float) -> float:
    """Exact derivative of shift_cost in theta, including jump terms."""
    pc = _pieces(X, Y, theta)
    smooth = -np.sum(pc.slope_y * pc.length * (pc.d0 + pc.d1))

    levels, y_minus, y_plus = Y.jumps()
    if levels.size == 0:
        return float(smooth)
    s_star = np.mod(levels - theta, 1.0)
    turns = np.round(s_star + theta - levels)
    x_star = X.evaluate(s_star)
    lift = TWO_PI * turns
    jump = (x_star - y_plus - lift) ** 2 - (x_star - y_minus - lift) ** 2
    return float(smooth + np.sum(jump))


def shift_gradient(X: QuantileLift, Y: QuantileLift, theta: float) -> Tuple[np.ndarray, np.ndarray]:
    """
    Gradient of shift_cost with respect to the piece endpoints of X.

    Returns:
        Tuple of (d/d left, d/d right)
    """
    pc = _pieces(X, Y, theta)
    d_lam = pc.length * (
        2.0 * pc.d0 * pc.lam0 + pc.d0 * pc.lam1 + pc.d1 * pc.lam0 + 2.0 * pc.d1 * pc.lam1
    ) / 6.0
    d_all = pc.length * (pc.d0 + pc.d1) / 2.0
    K = X.left.size
    d_right = 2.0 * np.bincount(pc.kx, weights=d_lam, minlength=K)
    d_left = 2.0 * np.bincount(pc.kx, weights=d_all, minlength=K) - d_right
    return d_left, d_right


def max_displacement(X: QuantileLift, Y: QuantileLift, theta: float) -> float:
    pc = _pieces(X, Y, theta)
    return float(max(np.max(np.abs(pc.d0)), np.max(np.abs(pc.d1))))


def optimal_shift(
    X: QuantileLift,
    Y: QuantileLift,
    hint: Optional[float] = None,
    xtol: float = 1e-14
) -> Tuple[float, float]:
    """
    Minimize shift_cost over the cut parameter theta.

    The cost is convex in theta. A warm-start hint is tried first; otherwise
    golden-section search localizes the minimum. A bracketing root find on
    the exact derivative then refines theta.

    Args:
        X: First quantile lift
        Y: Second quantile lift
        hint: Previous optimal theta, if known
        xtol: Tolerance in theta

    Returns:
        Tuple of (theta, cost)
    """
    def deriv(th):
        return shift_derivative(X, Y, th)

    bracket = None
    if hint is not None:
        for width in (1e-4, 1e-2, 0.25):
            lo, hi = hint - width, hint + width
            if deriv(lo) <= 0.0 <= deriv(hi):
                bracket = (lo, hi)
                break

    if bracket is None:
        golden = minimize_scalar(
            lambda th: shift_cost(X, Y, th),
            bracket=(-0.5, 0.5),
            method='golden',
            tol=1e-8
        )
        center = float(np.clip(golden.x, -THETA_BRACKET, THETA_BRACKET))
        width = 1e-6
        while width < 2.0 * THETA_BRACKET:
            lo, hi = center - width, center + width
            if deriv(lo) <= 0.0 <= deriv(hi):
                bracket = (lo, hi)
                break
            width *= 8.0
        if bracket is None:
            bracket = (-THETA_BRACKET, THETA_BRACKET)

    lo, hi = bracket
    g_lo, g_hi = deriv(lo), deriv(hi)
    if g_lo == 0.0:
        theta = lo
    elif g_hi == 0.0:
        theta = hi
    else:
        theta = brentq(deriv, lo, hi, xtol=xtol)
    return float(theta), shift_cost(X, Y, theta)


def dper2_quantile(m: MeasureLike, r: MeasureLike) -> float:
    """
    Squared periodic Wasserstein distance between arbitrary measures.

    Computed as the minimum over theta of the integrated squared gap
    between the lifted quantile functions.

    Args:
        m: CellMeasure, AtomMeasure or QuantileLift
        r: CellMeasure, AtomMeasure or QuantileLift (any resolution)

    Returns:
        Squared distance
    """
    _, cost = optimal_shift(as_lift(m), as_lift(r))
    return max(cost, 0.0)


def geodesic(m0: AtomMeasure, m1: AtomMeasure, t: float) -> AtomMeasure:
    """Constant-speed geodesic from m0 to m1 evaluated at time t in [0, 1]."""
    if not 0.0 <= t <= 1.0:
        raise ValueError("t must lie in [0, 1]")
    _, plan = dper2(m0, m1)
    return AtomMeasure.equal(wrap((1.0 - t) * plan.sources + t * plan.lifted_targets))


def generalized_maps(
    w: AtomMeasure,
    m0: AtomMeasure,
    m1: AtomMeasure
) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """
    Lifted optimal maps from the base atoms to m0 and to m1.

    Returns:
        Tuple of (base positions, lifted images in m0, lifted images in m1)
    """
    _, plan0 = dper2(w, m0)
    _, plan1 = dper2(w, m1)
    return w.positions.copy(), plan0.lifted_targets, plan1.lifted_targets


def generalized_geodesic(
    w: AtomMeasure,
    m0: AtomMeasure,
    m1: AtomMeasure,
    t: float
) -> Tuple[AtomMeasure, float]:
    """
    Generalized geodesic based at w, evaluated at time t.

    Interpolated atoms that coincide merge into one atom of the summed
    weight, so the result can hold fewer than N atoms. Use dper2_lifts on
    the interpolated lifts to keep the N-atom system.

    Args:
        w: Base atoms
        m0: Start atoms
        m1: End atoms
        t: Time in [0, 1]

    Returns:
        Tuple of (interpolated atoms, d_gamma^2 between the two lifted maps)
    """
    if not 0.0 <= t <= 1.0:
        raise ValueError("t must lie in [0, 1]")
    _, lift0, lift1 = generalized_maps(w, m0, m1)
    dgamma2 = float(np.mean((lift0 - lift1) ** 2))
    return AtomMeasure.equal(wrap((1.0 - t) * lift0 + t * lift1)), dgamma2
