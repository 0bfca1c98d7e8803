"""
Unit tests for the minimizing-movement scheme.
"""

import unittest
from unittest import mock
import os
import sys

import numpy as np
from scipy.optimize import minimize_scalar

# Add src to path
sys.path.insert(0, os.path.join(os.path.dirname(__file__), '..', 'src'))

from measure import (
    CellMeasure, atoms_of, cells_from_lifts, cosine_measure, dirac_measure, uniform_measure
)
from circot import dper2_quantile, optimal_shift
from energy import free_energy
from jko import (
    FlowSolver, InnerConfig, NonConvergenceError, SolverConfig, contraction_check,
    energy_gap_check, error_bound_check, evolve, inviscid_sweep, jko_objective, jko_step,
    minimizer, nodes_from_parameters, parameter_gradient, parameters_of,
    StepObjective, psi_at_lifts, psi_convexity_check
)


class TestSolverConfig(unittest.TestCase):
    """Test cases for solver parameters."""

    def test_defaults(self):
        """Test default configuration is valid."""
        config = SolverConfig()
        self.assertEqual(config.inner.method, 'newton')
        self.assertEqual(config.max_halvings, 3)

    def test_preconditions(self):
        """Test invalid parameters are rejected."""
        with self.assertRaises(ValueError):
            SolverConfig(nu=-0.1)
        with self.assertRaises(ValueError):
            SolverConfig(tau=0.0)
        with self.assertRaises(ValueError):
            SolverConfig(tau=0.1, t_end=0.05)
        with self.assertRaises(ValueError):
            SolverConfig(N=1)
        with self.assertRaises(ValueError):
            SolverConfig(coeff=0.3)
        with self.assertRaises(ValueError):
            InnerConfig(method='bfgs')

    def test_from_values(self):
        """Test construction from a flat experiment dictionary."""
        values = {
            'nu': 0.2, 'tau': 0.05, 't_end': 1.0, 'N': 16, 'coeff': 1,
            'inner_method': 'gradient', 'max_iter': 50, 'grad_tol': 1e-8,
            'armijo_c': 1e-4, 'armijo_shrink': 0.5, 'step_init': None,
            'seed': 3, 'restarts': 1, 'max_halvings': 2,
        }
        config = SolverConfig.from_values(values)
        self.assertEqual(config.N, 16)
        self.assertEqual(config.coeff, 1.0)
        self.assertEqual(config.inner.method, 'gradient')
        self.assertEqual(config.replace(nu=0.0).nu, 0.0)


class TestParametrization(unittest.TestCase):
    """Test cases for the (base, z) coordinates."""

    def test_round_trip(self):
        """Test encoding then decoding a measure recovers its nodes."""
        m = CellMeasure.from_spacings(0.4, [0.5, 1.0, 2.0, 1.5])
        nodes, h = nodes_from_parameters(parameters_of(m))
        self.assertTrue(np.allclose(nodes, m.nodes))
        self.assertTrue(np.allclose(h, m.spacings))

    def test_chain_rule(self):
        """Test the parameter gradient of a linear node functional."""
        rng = np.random.default_rng(2)
        cand = np.concatenate(([0.3], rng.normal(size=6)))
        weights = rng.normal(size=6)
        nodes, h = nodes_from_parameters(cand)
        grad = parameter_gradient(weights, h)
        fd = np.zeros_like(cand)
        for i in range(cand.size):
            e = np.zeros_like(cand)
            e[i] = 1e-6
            up = np.dot(weights, nodes_from_parameters(cand + e)[0])
            down = np.dot(weights, nodes_from_parameters(cand - e)[0])
            fd[i] = (up - down) / 2e-6
        self.assertTrue(np.allclose(grad, fd, atol=1e-8))


class TestObjective(unittest.TestCase):
    """Test cases for the one-step objective."""

    def test_objective_at_previous(self):
        """Test Psi(prev) equals F(prev)."""
        prev = cosine_measure(0.1, 16)
        value, _ = jko_objective(0.05, prev, parameters_of(prev), nu=0.1)
        self.assertAlmostEqual(value, free_energy(prev, 0.1).total, places=10)

    def test_energy_gradient_vanishes_at_uniform(self):
        """Test the stationarity of the uniform measure."""
        prev = uniform_measure(16)
        _, grad = jko_objective(0.05, prev, parameters_of(prev), nu=0.1)
        self.assertLess(np.max(np.abs(grad)), 1e-10)

    def test_gradient_matches_differences(self):
        """Test the objective gradient against central differences."""
        rng = np.random.default_rng(7)
        prev = CellMeasure.from_spacings(-0.5, rng.uniform(0.2, 1.0, 12))
        cand = parameters_of(CellMeasure.from_spacings(0.8, rng.uniform(0.2, 1.0, 12)))
        value, grad = jko_objective(0.05, prev, cand, nu=0.1)
        fd = np.zeros_like(cand)
        for i in range(cand.size):
            e = np.zeros_like(cand)
            e[i] = 1e-6
            fd[i] = (jko_objective(0.05, prev, cand + e, nu=0.1)[0]
                     - jko_objective(0.05, prev, cand - e, nu=0.1)[0]) / 2e-6
        self.assertLess(np.linalg.norm(fd - grad) / np.linalg.norm(grad), 1e-5)

    def test_evaluation_is_cached(self):
        """Test repeated evaluation at the same nodes reuses the cut search."""
        prev = cosine_measure(0.1, 16)
        objective = StepObjective(0.05, prev, 0.1, 0.5)
        with mock.patch('jko.optimal_shift', wraps=optimal_shift) as shift, \
                mock.patch('circot.minimize_scalar', wraps=minimize_scalar) as golden:
            first = objective.evaluate(prev.nodes)
            second = objective.evaluate(prev.nodes, hessian=True)
        self.assertEqual(shift.call_count, 1)
        golden.assert_not_called()
        self.assertEqual(first[0], second[0])
        np.testing.assert_array_equal(first[1], second[1])
        np.testing.assert_allclose(second[2], second[2].T, atol=1e-10)

    def test_hessian_built_once_per_newton_iteration(self):
        """Test a converged step assembles no Hessian at its final point."""
        config = SolverConfig(nu=0.1, tau=0.05, t_end=0.05, N=16)
        with mock.patch.object(StepObjective, 'newton_hessian', autospec=True,
                               side_effect=StepObjective.newton_hessian) as built:
            result = FlowSolver(config).step(cosine_measure(0.1, 16))
        self.assertTrue(result.converged)
        self.assertGreater(result.iterations, 0)
        schur = [c for c in built.call_args_list if c.kwargs.get('schur', True)]
        self.assertEqual(len(schur), result.iterations)


class TestStep(unittest.TestCase):
    """Test cases for single steps."""

    def test_uniform_fixed_point(self):
        """Test the uniform measure is a fixed point."""
        config = SolverConfig(nu=0.1, tau=0.05, t_end=0.05, N=16)
        result = jko_step(0.05, uniform_measure(16), config)
        self.assertLessEqual(dper2_quantile(result, uniform_measure(16)), 1e-10)

    def test_step_decreases_energy(self):
        """Test one step satisfies the telescoping energy inequality."""
        config = SolverConfig(nu=0.1, tau=0.05, t_end=0.05, N=16)
        prev = cosine_measure(0.1, 16)
        result = FlowSolver(config).step(prev)
        self.assertTrue(result.converged)
        cost = dper2_quantile(prev, result.measure)
        f_prev = free_energy(prev, 0.1).total
        f_next = free_energy(result.measure, 0.1).total
        self.assertLessEqual(f_next, f_prev - cost / (2 * 0.05) + 1e-8)
        self.assertLess(result.max_displacement, np.pi)

    def test_gradient_method(self):
        """Test the plain gradient method also decreases Psi."""
        config = SolverConfig(
            nu=0.2, tau=0.05, t_end=0.05, N=8,
            inner=InnerConfig(method='gradient', max_iter=200, grad_tol=1e-6)
        )
        prev = cosine_measure(0.1, 8)
        result = FlowSolver(config).step(prev)
        self.assertLessEqual(result.objective, free_energy(prev, 0.2).total + 1e-12)

    def test_restarts_are_deterministic(self):
        """Test seeded restarts reproduce the same step."""
        config = SolverConfig(nu=0.1, tau=0.05, t_end=0.05, N=8, restarts=2, seed=5)
        prev = cosine_measure(0.1, 8)
        first = FlowSolver(config).step(prev, step_index=1).measure
        second = FlowSolver(config).step(prev, step_index=1).measure
        self.assertTrue(np.array_equal(first.lefts, second.lefts))

    def test_non_convergence_raises(self):
        """Test an unreachable tolerance exhausts the halvings."""
        config = SolverConfig(
            nu=0.1, tau=0.05, t_end=0.05, N=8, max_halvings=1,
            inner=InnerConfig(method='gradient', max_iter=1, grad_tol=1e-14)
        )
        with self.assertRaises(NonConvergenceError) as ctx:
            evolve(cosine_measure(0.1, 8), config)
        self.assertEqual(ctx.exception.step_index, 1)

    def test_acceptance_within_a_decade_of_tolerance(self):
        """Test a step is accepted iff its stationarity is within 10x the tolerance."""
        config = SolverConfig(nu=0.1, tau=0.05, t_end=0.05, N=8)
        solver = FlowSolver(config)
        prev = cosine_measure(0.1, 8)
        for factor, expected in ((0.5, True), (5.0, True), (10.0, True), (20.0, False)):
            def stalled(objective, start, tau):
                return start, objective.value(start), factor * solver.tolerance, 1
            with self.subTest(factor=factor), mock.patch.object(solver, '_minimize', side_effect=stalled):
                self.assertIs(solver.step(prev).converged, expected)


class TestTrajectory(unittest.TestCase):
    """Test cases for evolved trajectories."""

    @classmethod
    def setUpClass(cls):
        cls.config = SolverConfig(nu=0.1, tau=0.05, t_end=0.5, N=16)
        cls.traj = evolve(cosine_measure(0.1, 16), cls.config)

    def test_times(self):
        """Test snapshot times are multiples of tau."""
        self.assertEqual(len(self.traj), 11)
        self.assertTrue(np.allclose(self.traj.times, 0.05 * np.arange(11)))

    def test_energy_decay(self):
        """Test every step satisfies the telescoping inequality."""
        self.assertEqual(self.traj.decay_violations(), [])
        self.assertTrue(np.all(np.diff(self.traj.totals) <= 1e-8))

    def test_distance_to_minimizer_decreases(self):
        """Test the flow approaches the uniform measure."""
        dist = self.traj.dist_to_minimizer()
        self.assertTrue(np.all(np.diff(dist) <= 1e-4))
        self.assertLess(dist[-1], dist[0])

    def test_energy_gap_rate(self):
        """Test the energy gap rate inequality."""
        self.assertTrue(energy_gap_check(self.traj)['passed'])

    def test_at_time(self):
        """Test the piecewise-constant interpolant."""
        self.assertIs(self.traj.at_time(0.12), self.traj.snapshots[2])
        self.assertIs(self.traj.at_time(0.1), self.traj.snapshots[2])

    def test_deterministic(self):
        """Test identical configurations give identical trajectories."""
        again = evolve(cosine_measure(0.1, 16), self.config)
        self.assertTrue(np.array_equal(again.snapshots[-1].lefts, self.traj.snapshots[-1].lefts))

    def test_minimizer(self):
        """Test the minimizer is the uniform measure."""
        self.assertTrue(np.allclose(minimizer(self.config).spacings, 2 * np.pi / 16))


class TestSingularData(unittest.TestCase):
    """Test cases for gapped initial data."""

    def test_dirac_spreads(self):
        """Test an inviscid flow from a mollified atom spreads it out."""
        config = SolverConfig(nu=0.0, tau=0.02, t_end=0.1, N=16)
        traj = evolve(dirac_measure(1e-3, 16), config)
        widths = [m.min_spacing for m in traj.snapshots]
        peaks = [m.density_max for m in traj.snapshots]
        self.assertGreater(widths[-1], widths[0])
        self.assertLess(peaks[-1], peaks[0])
        self.assertEqual(traj.decay_violations(), [])


class TestDiagnostics(unittest.TestCase):
    """Test cases for the flow-level checks."""

    def test_contraction(self):
        """Test two flows do not separate."""
        config = SolverConfig(nu=0.1, tau=0.05, t_end=0.3, N=16)
        report = contraction_check(cosine_measure(0.1, 16), cosine_measure(-0.05, 16).translate(0.5), config)
        self.assertTrue(report['passed'])

    def test_error_bound(self):
        """Test the coarse/fine distance bound."""
        config = SolverConfig(nu=0.1, tau=0.1, t_end=0.3, N=16)
        report = error_bound_check(cosine_measure(0.1, 16), 0.1, 0.1, 0.3, config, fine_factor=4)
        self.assertTrue(report['passed'])
        self.assertGreater(report['bound'], 0.0)

    def test_error_bound_rejects_negative_viscosity(self):
        """Test the viscosity precondition of the bound."""
        with self.assertRaises(ValueError):
            error_bound_check(cosine_measure(0.1, 16), -1.0, 0.1, 0.3)

    def test_inviscid_sweep_validation(self):
        """Test the viscosity list must decrease to zero."""
        config = SolverConfig(nu=0.1, tau=0.05, t_end=0.1, N=8)
        with self.assertRaises(ValueError):
            inviscid_sweep(cosine_measure(0.1, 8), [0.1, 0.2, 0.0], config)
        with self.assertRaises(ValueError):
            inviscid_sweep(cosine_measure(0.1, 8), [0.2, 0.1], config)

    def test_inviscid_sweep(self):
        """Test errors shrink as the viscosity decreases."""
        config = SolverConfig(nu=0.1, tau=0.05, t_end=0.2, N=16)
        report = inviscid_sweep(cosine_measure(0.1, 16), [0.2, 0.1, 0.05, 0.0], config)
        self.assertEqual(report['errors'][-1], 0.0)
        self.assertTrue(report['passed'])

    def test_psi_convexity(self):
        """Test the strengthened convexity inequality along generalized geodesics."""
        rng = np.random.default_rng(21)
        for _ in range(5):
            prev, m0, m1 = (CellMeasure.from_spacings(rng.uniform(-np.pi, np.pi), rng.uniform(0.3, 1.0, 12))
                            for _ in range(3))
            passed, worst = psi_convexity_check(0.05, prev, m0, m1, nu=0.1)
            self.assertTrue(passed, f"violation {worst:.3e}")

    def test_psi_at_coincident_lifts(self):
        """Test Psi stays defined when two interpolated atoms coincide."""
        w = atoms_of(uniform_measure(4))
        lifts = np.array([-0.75 * np.pi, 0.0, 0.0, 0.75 * np.pi])
        value = psi_at_lifts(0.05, w, lifts, nu=0.1)
        energy = free_energy(cells_from_lifts(lifts), 0.1).total
        self.assertAlmostEqual(value, (np.pi ** 2 / 32.0) / 0.1 + energy, places=10)


if __name__ == '__main__':
    unittest.main()
