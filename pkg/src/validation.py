"""
Acceptance suite for the circleflow solvers.

Runs the property checks of every module as a list of named checks, in
the same PASS/FAIL style as a pre-run checklist. The quick scale keeps
every check within a few minutes; the full scale uses the production
sizes.
"""

from dataclasses import dataclass
from typing import Callable, Dict, List, Optional, Tuple

import numpy as np

from measure import (
    TWO_PI, AtomMeasure, CellMeasure, cantor_measure, cells_from_lifts,
    cosine_measure, dirac_measure, grid_nodes, uniform_measure
)
from circot import dper2, dper2_lifts, dper2_oracle, dper2_quantile, generalized_maps, geodesic
from energy import (
    entropy, free_energy, hilbert_transform, hilbert_transform_pv, interaction,
    weak_form_residual
)
from jko import (
    FlowSolver, SolverConfig, contraction_check, error_bound_check, evolve,
    inviscid_sweep, jko_objective, parameters_of, psi_convexity_check
)
from spectral import cross_validate
from utils.logger import get_logger


@dataclass
class CheckResult:
    passed: bool
    message: str
    value: Optional[float] = None
    bound: Optional[float] = None


SCALES: Dict[str, Dict] = {
    'quick': {
        'oracle_pairs': 50,
        'metric_triples': 30,
        'convexity_triples': 30,
        'structure_N': 32,
        'decay': {'N': 32, 'tau': 0.1, 't_end': 20.0},
        'error_bound': {'N': 32, 'taus': [0.1], 't_end': 0.5},
        'contraction': {'N': 32, 'tau': 0.05, 't_end': 1.0},
        'sweep': {'N': 32, 'tau': 0.05, 't_end': 1.0},
        'dirac_N': 32,
        'cantor_levels': [3, 4, 5, 6],
        'semicontinuity': {'N': 128, 'modes': [1, 2, 4]},
        'weak_form': {'N': 32, 'tau': 0.02, 't': 0.1},
        'cross': {'N': 32, 'tau': 0.01, 't_end': 0.2, 'M': 128},
    },
    'full': {
        'oracle_pairs': 200,
        'metric_triples': 100,
        'convexity_triples': 100,
        'structure_N': 64,
        'decay': {'N': 128, 'tau': 0.02, 't_end': 20.0},
        'error_bound': {'N': 64, 'taus': [0.1, 0.05], 't_end': 1.0},
        'contraction': {'N': 64, 'tau': 0.02, 't_end': 2.0},
        'sweep': {'N': 64, 'tau': 0.02, 't_end': 1.0},
        'dirac_N': 64,
        'cantor_levels': [3, 4, 5, 6, 7, 8],
        'semicontinuity': {'N': 256, 'modes': [1, 2, 4, 8]},
        'weak_form': {'N': 64, 'tau': 0.01, 't': 0.1},
        'cross': {'N': 128, 'tau': 1e-3, 't_end': 0.5, 'M': 256},
    },
}

DECAY_AMPLITUDE = 0.1 / TWO_PI / 0.15
OSCILLATION_AMPLITUDE = 0.6 / TWO_PI


def random_atoms(rng: np.random.Generator, N: int) -> AtomMeasure:
    """N distinct equal-weight atoms."""
    while True:
        atoms = AtomMeasure.equal(rng.uniform(-np.pi, np.pi, N))
        if atoms.N == N:
            return atoms


def random_cells(rng: np.random.Generator, N: int) -> CellMeasure:
    return CellMeasure.from_spacings(rng.uniform(-np.pi, np.pi), rng.uniform(0.2, 1.0, N))


class AcceptanceSuite:
    """Runs the acceptance checks at a given scale."""

    def __init__(self, scale: str = 'quick', seed: int = 0):
        """
        Initialize acceptance suite.

        Args:
            scale: 'quick' or 'full'
            seed: Seed for the randomized checks
        """
        if scale not in SCALES:
            raise ValueError("scale must be 'quick' or 'full'")
        self.scale = scale
        self.params = SCALES[scale]
        self.seed = seed
        self.logger = get_logger()
        self.results: List[Tuple[str, CheckResult]] = []

    def checks(self) -> List[Tuple[str, Callable[[], CheckResult]]]:
        return [
            ("OT oracle equivalence", self.check_oracle),
            ("Metric axioms", self.check_metric),
            ("Geodesic constant speed", self.check_geodesic),
            ("Hilbert transform", self.check_hilbert),
            ("Energy anchors", self.check_energy_anchors),
            ("Convexity suite", self.check_convexity),
            ("JKO structure", self.check_jko_structure),
            ("Decay to minimizer", self.check_decay),
            ("Error bound", self.check_error_bound),
            ("Contraction", self.check_contraction),
            ("Inviscid limit", self.check_inviscid),
            ("Singularity escape", self.check_dirac),
            ("Cantor finiteness", self.check_cantor),
            ("Lower semicontinuity", self.check_semicontinuity),
            ("Weak form", self.check_weak_form),
            ("Cross validation", self.check_cross_validation),
        ]

    def run(self, only: Optional[List[str]] = None) -> Tuple[bool, str]:
        """
        Run all checks (or the named subset).

        Returns:
            Tuple of (success: bool, message: str)
        """
        self.logger.info("=" * 60)
        self.logger.info(f"ACCEPTANCE SUITE ({self.scale})")
        self.logger.info("=" * 60)

        failed = []
        self.results = []
        for name, func in self.checks():
            if only is not None and name not in only:
                continue
            self.logger.info(f"Checking: {name}...")
            try:
                result = func()
            except Exception as e:
                result = CheckResult(False, f"{type(e).__name__}: {e}")
            self.results.append((name, result))

            if result.passed:
                self.logger.info(f"  ✓ {name}: PASS - {result.message}")
            else:
                self.logger.log_check_event(f"{name}: FAIL - {result.message}", 'ERROR')
                failed.append(name)

        self.logger.info("=" * 60)
        if failed:
            message = f"Acceptance checks failed: {', '.join(failed)}"
            self.logger.log_check_event(message, 'CRITICAL')
            return False, message
        self.logger.info("✓ All acceptance checks passed!")
        return True, "All checks passed"

    def assertions(self) -> List[Dict]:
        """Results as report entries."""
        return [
            {'name': name, 'passed': r.passed, 'value': r.value, 'bound': r.bound}
            for name, r in self.results
        ]

    def _rng(self, offset: int) -> np.random.Generator:
        return np.random.default_rng(self.seed + offset)

    def check_oracle(self) -> CheckResult:
        rng = self._rng(1)
        worst = 0.0
        for _ in range(self.params['oracle_pairs']):
            N = int(rng.integers(2, 9))
            a, b = random_atoms(rng, N), random_atoms(rng, N)
            worst = max(worst, abs(dper2(a, b)[0] - dper2_oracle(a, b)))
        return CheckResult(worst <= 1e-10, f"max deviation {worst:.2e}", worst, 1e-10)

    def check_metric(self) -> CheckResult:
        rng = self._rng(2)
        sym, tri = 0.0, -np.inf
        for _ in range(self.params['metric_triples']):
            a, b, c = (random_atoms(rng, 32) for _ in range(3))
            ab = np.sqrt(dper2(a, b)[0])
            ba = np.sqrt(dper2(b, a)[0])
            bc = np.sqrt(dper2(b, c)[0])
            ac = np.sqrt(dper2(a, c)[0])
            sym = max(sym, abs(ab - ba))
            tri = max(tri, ac - ab - bc)
        passed = sym <= 1e-12 and tri <= 1e-10
        return CheckResult(passed, f"symmetry {sym:.2e}, triangle slack {tri:.2e}", max(sym, tri), 1e-10)

    def check_geodesic(self) -> CheckResult:
        rng = self._rng(3)
        worst = 0.0
        for _ in range(10):
            a, b = random_atoms(rng, 16), random_atoms(rng, 16)
            d = np.sqrt(dper2(a, b)[0])
            times = np.sort(rng.uniform(0.0, 1.0, 5))
            points = [geodesic(a, b, t) for t in times]
            for i in range(len(times) - 1):
                dst = np.sqrt(dper2(points[i], points[i + 1])[0])
                worst = max(worst, abs(dst - (times[i + 1] - times[i]) * d))
        return CheckResult(worst <= 1e-8, f"max deviation {worst:.2e}", worst, 1e-8)

    def check_hilbert(self) -> CheckResult:
        x = grid_nodes(256)
        worst = 0.0
        for k in range(1, 9):
            worst = max(worst, np.max(np.abs(hilbert_transform(np.cos(k * x)) - np.sin(k * x))))
            worst = max(worst, np.max(np.abs(hilbert_transform(np.sin(k * x)) + np.cos(k * x))))
        xf = grid_nodes(1024)
        u = 1.0 / TWO_PI + 0.1 * np.cos(xf) + 0.05 * np.sin(3 * xf)
        pv = float(np.max(np.abs(hilbert_transform_pv(u) - hilbert_transform(u))))
        passed = worst <= 1e-12 and pv <= 1e-4
        return CheckResult(passed, f"multiplier {worst:.2e}, quadrature {pv:.2e}", float(worst), 1e-12)

    def check_energy_anchors(self) -> CheckResult:
        ent = entropy(uniform_measure(64))
        ent_err = abs(ent + np.log(TWO_PI))
        exact = np.log(2.0) / np.pi
        err_256 = abs(interaction(uniform_measure(256), coeff=1.0) - exact)
        err_512 = abs(interaction(uniform_measure(512), coeff=1.0) - exact)
        refines = err_512 <= 0.6 * err_256 or err_512 <= 1e-10
        passed = ent_err <= 1e-9 and err_256 <= 2e-3 and refines
        return CheckResult(
            passed,
            f"entropy error {ent_err:.2e}, interaction errors {err_256:.2e} -> {err_512:.2e}",
            float(err_256), 2e-3
        )

    def check_convexity(self) -> CheckResult:
        rng = self._rng(6)
        worst_f, worst_d, worst_chain, worst_psi = -np.inf, -np.inf, -np.inf, -np.inf
        for _ in range(self.params['convexity_triples']):
            w, a, b = (random_atoms(rng, 16) for _ in range(3))
            _, lift0, lift1 = generalized_maps(w, a, b)
            dg2 = float(np.mean((lift0 - lift1) ** 2))
            worst_chain = max(worst_chain, dper2(a, b)[0] - dg2)

            f_end = [free_energy(cells_from_lifts(L), 0.1).total for L in (lift0, lift1)]
            d_end = [dper2(w, m)[0] for m in (a, b)]
            for t in (0.25, 0.5, 0.75):
                lifts = (1.0 - t) * lift0 + t * lift1
                f_t = free_energy(cells_from_lifts(lifts), 0.1).total
                worst_f = max(worst_f, f_t - ((1.0 - t) * f_end[0] + t * f_end[1]))
                d_t = dper2_lifts(w, lifts)
                bound = (1.0 - t) * d_end[0] + t * d_end[1] - t * (1.0 - t) * dg2
                worst_d = max(worst_d, d_t - bound)

        prev, m0, m1 = (random_cells(rng, 16) for _ in range(3))
        psi_ok, psi_worst = psi_convexity_check(0.05, prev, m0, m1, nu=0.1)
        worst_psi = max(worst_psi, psi_worst)

        passed = worst_f <= 1e-6 and worst_d <= 1e-6 and worst_chain <= 1e-10 and psi_ok
        return CheckResult(
            passed,
            f"F {worst_f:.2e}, d2 {worst_d:.2e}, chain {worst_chain:.2e}, Psi {worst_psi:.2e}",
            float(max(worst_f, worst_d, worst_psi)), 1e-6
        )

    def check_jko_structure(self) -> CheckResult:
        N = self.params['structure_N']
        config = SolverConfig(nu=0.1, tau=0.05, t_end=0.5, N=N)
        traj = evolve(cosine_measure(0.1, N), config)
        violations = traj.decay_violations()

        fixed = FlowSolver(config).step(uniform_measure(N)).measure
        fixed_dist = dper2_quantile(fixed, uniform_measure(N))

        rng = self._rng(7)
        prev = random_cells(rng, 16)
        cand = parameters_of(random_cells(rng, 16))
        value, grad = jko_objective(0.05, prev, cand, nu=0.1)
        fd = np.zeros_like(cand)
        step = 1e-6
        for i in range(cand.size):
            e = np.zeros_like(cand)
            e[i] = step
            fd[i] = (jko_objective(0.05, prev, cand + e, nu=0.1)[0]
                     - jko_objective(0.05, prev, cand - e, nu=0.1)[0]) / (2.0 * step)
        rel = float(np.linalg.norm(fd - grad) / max(np.linalg.norm(grad), 1e-12))

        passed = not violations and fixed_dist <= 1e-10 and rel <= 1e-5
        return CheckResult(
            passed,
            f"decay violations {len(violations)}, fixed point {fixed_dist:.2e}, gradient {rel:.2e}",
            rel, 1e-5
        )

    def check_decay(self) -> CheckResult:
        p = self.params['decay']
        config = SolverConfig(nu=0.1, tau=p['tau'], t_end=p['t_end'], N=p['N'])
        traj = evolve(cosine_measure(DECAY_AMPLITUDE, p['N']), config)
        dist = traj.dist_to_minimizer()
        rises = float(np.max(np.diff(dist))) if dist.size > 1 else 0.0
        final = float(dist[-1])
        passed = rises <= 1e-4 and final <= 1e-2
        return CheckResult(passed, f"largest rise {rises:.2e}, final distance {final:.2e}", final, 1e-2)

    def check_error_bound(self) -> CheckResult:
        p = self.params['error_bound']
        m0 = cosine_measure(DECAY_AMPLITUDE, p['N'])
        base = SolverConfig(nu=0.1, tau=p['taus'][0], t_end=p['t_end'], N=p['N'])
        reports = [error_bound_check(m0, 0.1, tau, p['t_end'], base) for tau in p['taus']]
        ratio = max(r['sup_dist2'] / r['bound'] for r in reports)
        passed = all(r['passed'] for r in reports)
        return CheckResult(passed, f"worst sup/bound ratio {ratio:.3f}", ratio, 1.0)

    def check_contraction(self) -> CheckResult:
        p = self.params['contraction']
        config = SolverConfig(nu=0.1, tau=p['tau'], t_end=p['t_end'], N=p['N'])
        m0 = cosine_measure(0.1, p['N'])
        r0 = cosine_measure(-0.05, p['N']).translate(0.5)
        report = contraction_check(m0, r0, config)
        excess = report['max_distance'] - report['initial_distance']
        return CheckResult(report['passed'], f"max excess {excess:.2e}", excess, 1e-4)

    def check_inviscid(self) -> CheckResult:
        p = self.params['sweep']
        config = SolverConfig(nu=0.1, tau=p['tau'], t_end=p['t_end'], N=p['N'])
        report = inviscid_sweep(cosine_measure(0.1, p['N']), [0.2, 0.1, 0.05, 0.0], config)
        errors = ", ".join(f"{e:.3e}" for e in report['errors'][:-1])
        return CheckResult(report['passed'], f"e(nu) = {errors}", report['errors'][0], None)

    def check_dirac(self) -> CheckResult:
        N = self.params['dirac_N']
        config = SolverConfig(nu=0.0, tau=0.02, t_end=0.1, N=N)
        traj = evolve(dirac_measure(1e-3, N), config)
        widths = np.array([m.min_spacing for m in traj.snapshots])
        peaks = np.array([m.density_max for m in traj.snapshots])
        passed = bool(np.all(np.diff(widths) > 0.0) and np.all(np.diff(peaks) < 0.0))
        return CheckResult(passed, f"min width {widths[0]:.2e} -> {widths[-1]:.2e}", float(widths[-1]), None)

    def check_cantor(self) -> CheckResult:
        values = np.array([free_energy(cantor_measure(n), 0.0).total for n in self.params['cantor_levels']])
        steps = np.abs(np.diff(values))
        passed = bool(np.all(np.isfinite(values)) and np.all(np.diff(steps) < 0.0))
        return CheckResult(passed, f"F_0 from {values[0]:.4f} to {values[-1]:.4f}", float(values[-1]), None)

    def check_semicontinuity(self) -> CheckResult:
        """Densities 1/(2 pi) + a cos(kx) converge to uniform while F keeps the entropy gap."""
        p = self.params['semicontinuity']
        N, nu = p['N'], 0.1
        limit = uniform_measure(N)
        f_limit = free_energy(limit, nu).total
        seq = [cosine_measure(OSCILLATION_AMPLITUDE, N, k) for k in p['modes']]
        dists = np.array([np.sqrt(dper2_quantile(m, limit)) for m in seq])
        values = np.array([free_energy(m, nu).total for m in seq])

        shrinking = bool(np.all(np.diff(dists) < 0.0))
        converges = shrinking and dists[-1] <= 2.0 * dists[0] / p['modes'][-1]
        below = float(np.max(f_limit - values))
        gap = float(values[-1] - f_limit)
        entropy_gap = entropy(seq[-1]) - entropy(limit)
        passed = converges and below <= 1e-10 and gap >= 0.5 * nu * entropy_gap
        return CheckResult(
            passed,
            f"d {dists[0]:.2e} -> {dists[-1]:.2e}, F - F(limit) {values[0] - f_limit:.4e} -> {gap:.4e}",
            gap, 0.5 * nu * entropy_gap
        )

    def check_weak_form(self) -> CheckResult:
        p = self.params['weak_form']
        t = p['t']
        residuals = []
        for refine in (1, 2):
            N, tau = p['N'] * refine, p['tau'] / refine
            config = SolverConfig(nu=0.5, tau=tau, t_end=t + 2 * tau, N=N)
            traj = evolve(cosine_measure(0.1, N), config)
            residuals.append(sum(weak_form_residual(traj, k, t) for k in (1, 2, 3)))
        order = float(np.log2(residuals[0] / residuals[1])) if residuals[1] > 0.0 else np.inf
        return CheckResult(order >= 0.8, f"residual {residuals[0]:.2e} -> {residuals[1]:.2e}", order, 0.8)

    def check_cross_validation(self) -> CheckResult:
        p = self.params['cross']
        config = SolverConfig(nu=0.5, tau=p['tau'], t_end=p['t_end'], N=p['N'])
        report = cross_validate(cosine_measure(0.1, p['N']), config, M=p['M'])
        worst = report['max_distance']
        return CheckResult(worst <= 5e-2, f"max distance {worst:.2e}", worst, 5e-2)
