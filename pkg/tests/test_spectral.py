"""
Unit tests for the pseudospectral reference solver.
"""

import unittest
import os
import sys

import numpy as np

# Add src to path
sys.path.insert(0, os.path.join(os.path.dirname(__file__), '..', 'src'))

from measure import TWO_PI, GridDensity, cosine_measure, grid_nodes
from jko import SolverConfig
from energy import hilbert_symbol, hilbert_transform
from spectral import (
    STATUS_OK, SpectralSolver, blowup_scenario, cosine_grid, cross_validate,
    growth_window, spectral_evolve, stability_bound
)


class TestSpectralSolver(unittest.TestCase):
    """Test cases for SpectralSolver."""

    def test_construction_checks(self):
        """Test grid, viscosity and sign preconditions."""
        with self.assertRaises(ValueError):
            SpectralSolver(48, 0.1)
        with self.assertRaises(ValueError):
            SpectralSolver(64, 0.0)
        with self.assertRaises(ValueError):
            SpectralSolver(64, 0.1, flux_sign=2)

    def test_uniform_is_steady(self):
        """Test the uniform density does not move."""
        u0 = GridDensity(np.full(64, 1.0 / TWO_PI))
        run = spectral_evolve(u0, 0.1, None, 0.5, sample_dt=0.1)
        self.assertEqual(run.status, STATUS_OK)
        self.assertLess(np.max(np.abs(run.l2_norms - run.l2_norms[0])), 1e-12)

    def test_mass_conserved(self):
        """Test the zeroth Fourier mode is preserved."""
        run = spectral_evolve(cosine_grid(0.1, 64), 0.1, None, 1.0, sample_dt=0.1)
        self.assertTrue(np.allclose(run.mass_modes, run.mass_modes[0], rtol=1e-13))
        self.assertAlmostEqual(run.mass_modes[0], 64 / TWO_PI, places=10)

    def test_cosine_decays(self):
        """Test cosine data relax under the dissipative convention."""
        run = spectral_evolve(cosine_grid(0.1, 64), 0.1, None, 1.0, sample_dt=0.1)
        self.assertTrue(np.all(np.diff(run.l2_norms) < 0))
        self.assertEqual(len(run.times), 11)

    def test_dt_above_bound_rejected(self):
        """Test the explicit stability bound."""
        solver = SpectralSolver(64, 0.1)
        with self.assertRaises(ValueError):
            solver.evolve(cosine_grid(0.1, 64), 1.0, dt=1.0)

    def test_non_positive_data_rejected(self):
        """Test strict positivity of the initial density."""
        g = GridDensity.from_values(1.0 + np.cos(grid_nodes(64)))
        with self.assertRaises(ValueError):
            SpectralSolver(64, 0.1).evolve(g, 1.0)

    def test_grid_mismatch_rejected(self):
        """Test the solver grid size must match the data."""
        with self.assertRaises(ValueError):
            SpectralSolver(32, 0.1).evolve(cosine_grid(0.1, 64), 1.0)

    def test_stability_bound_uniform(self):
        """Test the bound reduces to the diffusive limit for constant data."""
        u = np.full(32, 1.0 / TWO_PI)
        self.assertAlmostEqual(stability_bound(u, 0.1), 0.5 / (0.1 * 16 ** 2), places=12)

    def test_states_carry_samples(self):
        """Test each sampled state keeps its time, step and unit mass."""
        run = spectral_evolve(cosine_grid(0.1, 64), 0.2, None, 0.5, sample_dt=0.1)
        states = list(run.states())
        self.assertEqual([s.t for s in states], run.times)
        for state in states:
            self.assertEqual(state.M, 64)
            self.assertEqual(state.nu, 0.2)
            self.assertEqual(state.dt, run.dt)
            self.assertAlmostEqual(state.mean, 1.0 / TWO_PI, places=12)

    def test_multiplier_matches_energy_module(self):
        """Test the solver uses the same Hilbert multiplier as hilbert_transform."""
        solver = SpectralSolver(64, 0.1)
        np.testing.assert_array_equal(solver.hilbert_symbol, hilbert_symbol(64))
        u = 1.0 / TWO_PI + 0.05 * np.sin(3 * grid_nodes(64)) + 0.02 * np.cos(32 * grid_nodes(64))
        hu = np.fft.irfft(solver.hilbert_symbol * np.fft.rfft(u), n=64)
        np.testing.assert_allclose(hu, hilbert_transform(u), atol=1e-14)

    def test_rhs_of_cosine_data(self):
        """Test the Fourier right-hand side against the closed form for cosine data."""
        a, nu = 0.1, 0.3
        x = grid_nodes(64)
        u = 1.0 / TWO_PI + a * np.cos(x)
        rhs = np.fft.irfft(SpectralSolver(64, nu).rhs(np.fft.rfft(u)), n=64)
        expected = -nu * a * np.cos(x) - a * np.cos(x) / TWO_PI - a ** 2 * np.cos(2 * x)
        np.testing.assert_allclose(rhs, expected, atol=1e-13)


class TestBlowup(unittest.TestCase):
    """Test cases for the concentrating convention."""

    def test_growth_window(self):
        """Test detection of consecutive increases."""
        self.assertEqual(growth_window(np.array([1.0, 2.0, 3.0, 4.0])), 0)
        self.assertEqual(growth_window(np.array([1.0, 0.5, 1.0, 2.0, 3.0])), 1)
        self.assertIsNone(growth_window(np.array([3.0, 2.0, 2.5, 2.0, 1.0])))

    def test_zero_amplitude(self):
        """Test uniform data stay uniform."""
        report = blowup_scenario(0.0, 0.1, M=64, t_end=0.5)
        self.assertTrue(report['passed'])
        self.assertFalse(report['growth_expected'])

    def test_small_amplitude_decays(self):
        """Test |a1| < nu relaxes."""
        report = blowup_scenario(0.01, 0.5, M=64, t_end=0.5)
        self.assertFalse(report['growth_expected'])
        self.assertTrue(report['passed'])

    def test_large_amplitude_grows(self):
        """Test |a1| > nu concentrates."""
        report = blowup_scenario(0.1, 0.01, M=64, t_end=1.0)
        self.assertTrue(report['growth_expected'])
        self.assertTrue(report['passed'])
        self.assertIsNotNone(report['growth_window_start'])

    def test_amplitude_bound(self):
        """Test the positivity bound on a1."""
        with self.assertRaises(ValueError):
            blowup_scenario(0.2, 0.1)
        with self.assertRaises(ValueError):
            cosine_grid(0.2, 64)


class TestCrossValidation(unittest.TestCase):
    """Test cases for the comparison with the minimizing-movement scheme."""

    def test_preconditions(self):
        """Test the viscosity and coefficient requirements."""
        m0 = cosine_measure(0.1, 8)
        with self.assertRaises(ValueError):
            cross_validate(m0, SolverConfig(nu=0.1, tau=0.05, t_end=0.1, N=8))
        with self.assertRaises(ValueError):
            cross_validate(m0, SolverConfig(nu=0.2, tau=0.05, t_end=0.1, N=8, coeff=1.0))

    def test_trajectories_agree(self):
        """Test both solvers stay close on smooth data."""
        config = SolverConfig(nu=0.2, tau=0.02, t_end=0.2, N=32)
        report = cross_validate(cosine_measure(0.1, 32), config, M=64)
        self.assertEqual(report['spectral_status'], STATUS_OK)
        self.assertEqual(len(report['distances']), 11)
        self.assertLess(report['max_distance'], 5e-2)


if __name__ == '__main__':
    unittest.main()
