"""
Unit tests for circle measures and their conversions.
"""

import unittest
import os
import sys

import numpy as np
from hypothesis import given, settings, strategies as st

# Add src to path
sys.path.insert(0, os.path.join(os.path.dirname(__file__), '..', 'src'))

from measure import (
    TWO_PI, AtomMeasure, CellMeasure, GridDensity, atoms_of, cantor_measure,
    cells_from_lifts, cosine_measure, dirac_measure, from_cdf, from_density,
    initial_data, point_dist, to_density, uniform_measure, wrap
)
from circot import dper2_quantile


class TestWrap(unittest.TestCase):
    """Test cases for angle wrapping."""

    def test_wrap_range(self):
        """Test wrapped values land in [-pi, pi)."""
        x = np.linspace(-20.0, 20.0, 1001)
        w = wrap(x)
        self.assertTrue(np.all(w >= -np.pi))
        self.assertTrue(np.all(w < np.pi))
        turns = (w - x) / TWO_PI
        self.assertTrue(np.allclose(turns, np.round(turns), atol=1e-9))

    def test_wrap_pi_maps_to_minus_pi(self):
        """Test the half-open convention at pi."""
        self.assertEqual(wrap(np.pi), -np.pi)
        self.assertIsInstance(wrap(1.0), float)

    def test_point_dist(self):
        """Test geodesic distance on the circle."""
        self.assertAlmostEqual(point_dist(np.pi - 0.1, -np.pi + 0.1), 0.2, places=12)
        self.assertAlmostEqual(point_dist(0.0, np.pi), np.pi, places=12)


class TestCellMeasure(unittest.TestCase):
    """Test cases for CellMeasure."""

    def test_uniform(self):
        """Test uniform measure layout."""
        m = uniform_measure(8)
        self.assertEqual(m.N, 8)
        self.assertEqual(m.base, -np.pi)
        self.assertTrue(m.is_contiguous)
        self.assertTrue(np.allclose(m.densities, 1.0 / TWO_PI))

    def test_rejects_small_N(self):
        """Test N >= 2 is required."""
        with self.assertRaises(ValueError):
            uniform_measure(1)
        with self.assertRaises(ValueError):
            CellMeasure(np.array([0.0]), np.array([TWO_PI]))

    def test_rejects_bad_spacings(self):
        """Test non-positive and overlapping cells are rejected."""
        with self.assertRaises(ValueError):
            CellMeasure(np.array([-1.0, 0.0]), np.array([1.0, 0.0]))
        with self.assertRaises(ValueError):
            CellMeasure(np.array([-1.0, -0.5]), np.array([1.0, 1.0]))

    def test_rejects_base_out_of_range(self):
        """Test the base point convention."""
        with self.assertRaises(ValueError):
            CellMeasure(np.array([np.pi, 4.0]), np.array([0.5, 0.5]))

    def test_arrays_are_read_only(self):
        """Test measures are immutable."""
        m = uniform_measure(4)
        with self.assertRaises(ValueError):
            m.spacings[0] = 1.0

    def test_from_spacings_normalizes(self):
        """Test spacings are rescaled to total 2*pi."""
        m = CellMeasure.from_spacings(0.3, [1.0, 2.0, 3.0])
        self.assertAlmostEqual(float(np.sum(m.spacings)), TWO_PI, places=12)
        self.assertAlmostEqual(m.spacings[1] / m.spacings[0], 2.0, places=12)

    def test_from_nodes_wraps_base(self):
        """Test lifted nodes with a base outside [-pi, pi)."""
        nodes = np.array([4.0, 5.0, 7.0])
        m = CellMeasure.from_nodes(nodes)
        self.assertAlmostEqual(m.base, 4.0 - TWO_PI, places=12)
        self.assertTrue(np.allclose(m.spacings, [1.0, 2.0, TWO_PI - 3.0]))

    def test_quantile_and_cdf(self):
        """Test quantile and CDF are mutually inverse on the support."""
        m = CellMeasure.from_spacings(-1.0, [0.5, 1.0, 2.0, 0.7])
        s = np.linspace(0.0, 0.999, 37)
        self.assertTrue(np.allclose(m.cdf(m.quantile(s)), s, atol=1e-12))
        self.assertAlmostEqual(m.quantile(1.25), m.quantile(0.25) + TWO_PI, places=12)

    def test_translate(self):
        """Test rotation keeps spacings and shifts positions."""
        m = CellMeasure.from_spacings(-1.0, [0.5, 1.0, 2.0, 0.7])
        r = m.translate(3.0)
        self.assertTrue(np.allclose(r.spacings, m.spacings))
        self.assertTrue(np.allclose(wrap(r.midpoints - m.midpoints - 3.0), 0.0, atol=1e-12))

    def test_gap_filled(self):
        """Test gaps are split between neighbouring cells."""
        m = dirac_measure(0.1, 4)
        self.assertFalse(m.is_contiguous)

        filled = m.gap_filled()
        self.assertTrue(filled.is_contiguous)
        self.assertEqual(filled.N, 4)
        self.assertAlmostEqual(float(np.sum(filled.spacings)), TWO_PI, places=12)
        u = uniform_measure(4)
        self.assertIs(u.gap_filled(), u)


class TestAtomMeasure(unittest.TestCase):
    """Test cases for AtomMeasure."""

    def test_sorted_and_wrapped(self):
        """Test positions are wrapped and sorted."""
        a = AtomMeasure.equal([3.0, 4.0, -1.0])
        self.assertTrue(np.all(np.diff(a.positions) > 0))
        self.assertTrue(np.all(a.positions < np.pi))

    def test_ties_merge(self):
        """Test coincident atoms merge their weights."""
        a = AtomMeasure.equal([0.5, 0.5, -1.0, -1.0])
        self.assertEqual(a.N, 2)
        self.assertTrue(np.allclose(a.weights, 0.5))

    def test_weights_must_sum_to_one(self):
        """Test unnormalized weights are rejected."""
        with self.assertRaises(ValueError):
            AtomMeasure(np.array([0.0, 1.0]), np.array([0.5, 0.6]))

    def test_atoms_of(self):
        """Test midpoint collocation of cells."""
        a = atoms_of(uniform_measure(4))
        expected = wrap(-np.pi + (np.arange(4) + 0.5) * TWO_PI / 4)
        self.assertTrue(np.allclose(a.positions, np.sort(expected)))
        self.assertTrue(a.has_equal_weights)


class TestGridConversions(unittest.TestCase):
    """Test cases for density/cell conversions."""

    def test_grid_validation(self):
        """Test grid size and normalization checks."""
        with self.assertRaises(ValueError):
            GridDensity(np.full(6, 1.0 / TWO_PI))
        with self.assertRaises(ValueError):
            GridDensity(np.full(8, 1.0))
        g = GridDensity.from_values(np.ones(8))
        self.assertTrue(np.allclose(g.values, 1.0 / TWO_PI))

    def test_uniform_round_trip(self):
        """Test uniform cells and uniform grid map to each other."""
        g = to_density(uniform_measure(16), 64)
        self.assertTrue(np.allclose(g.values, 1.0 / TWO_PI, atol=1e-12))

        m = from_density(GridDensity(np.full(64, 1.0 / TWO_PI)), 16)
        self.assertTrue(np.allclose(m.spacings, TWO_PI / 16, atol=1e-12))

    def test_from_density_cosine(self):
        """Test grid inversion approaches the exact cosine cells."""
        a1 = 0.1
        M = 1024
        x = -np.pi + TWO_PI * np.arange(M) / M
        g = GridDensity.from_values(1.0 / TWO_PI + a1 * np.cos(x))
        approx = from_density(g, 32)
        exact = cosine_measure(a1, 32)
        self.assertLess(np.max(np.abs(approx.lefts - exact.lefts)), 1e-3)

    def test_from_cdf_uniform(self):
        """Test exact CDF inversion on the uniform law."""
        m = from_cdf(lambda x: (x + np.pi) / TWO_PI, 8)
        self.assertTrue(np.allclose(m.spacings, TWO_PI / 8, atol=1e-12))


class TestCanonicalData(unittest.TestCase):
    """Test cases for canonical initial data."""

    def test_cosine_cells_are_equal_mass(self):
        """Test cosine cells carry mass 1/N under the exact density."""
        a1 = 0.12
        m = cosine_measure(a1, 16)
        a, b = m.lefts, m.rights
        mass = (b - a) / TWO_PI + a1 * (np.sin(b) - np.sin(a))
        self.assertTrue(np.allclose(mass, 1.0 / 16, atol=1e-12))

    def test_cosine_amplitude_bound(self):
        """Test positivity bound on the amplitude."""
        with self.assertRaises(ValueError):
            cosine_measure(0.2, 16)

    def test_cosine_higher_mode(self):
        """Test cells of 1/(2 pi) + a1 cos(kx) carry mass 1/N."""
        a1, k = 0.09, 3
        m = cosine_measure(a1, 48, k)
        a, b = m.lefts, m.rights
        mass = (b - a) / TWO_PI + a1 * (np.sin(k * b) - np.sin(k * a)) / k
        self.assertTrue(np.allclose(mass, 1.0 / 48, atol=1e-12))
        with self.assertRaises(ValueError):
            cosine_measure(a1, 48, 0)

    def test_dirac(self):
        """Test mollified atom layout."""
        m = dirac_measure(1e-3, 10)
        self.assertTrue(np.allclose(m.spacings, 1e-4))
        self.assertAlmostEqual(float(m.lefts[0]), -5e-4, places=15)
        with self.assertRaises(ValueError):
            dirac_measure(0.0, 10)

    def test_cantor(self):
        """Test the ternary construction."""
        m = cantor_measure(3)
        self.assertEqual(m.N, 8)
        self.assertTrue(np.allclose(m.spacings, TWO_PI / 27))
        self.assertAlmostEqual(float(m.lefts[1] - m.lefts[0]), 2.0 * TWO_PI / 27, places=12)
        with self.assertRaises(ValueError):
            cantor_measure(0)

    def test_initial_data(self):
        """Test the initial data dispatcher."""
        self.assertEqual(initial_data('uniform', 8).N, 8)
        self.assertEqual(initial_data('cantor', 8, {'level': 2}).N, 4)
        with self.assertRaises(ValueError):
            initial_data('gaussian', 8)

    def test_cells_from_lifts(self):
        """Test mollification of ordered lifted atoms."""
        lifts = np.array([-2.0, -0.5, 1.0, 2.5])
        m = cells_from_lifts(lifts)
        self.assertTrue(m.is_contiguous)
        self.assertTrue(np.allclose(wrap(m.midpoints[1:3] - np.array([-0.5, 1.0])), 0.0))
        with self.assertRaises(ValueError):
            cells_from_lifts(np.array([0.0, -1.0, 2.0]))


class TestMeasureProperties(unittest.TestCase):
    """Property tests for measure invariants."""

    @given(
        st.floats(min_value=-np.pi, max_value=3.1),
        st.lists(st.floats(min_value=0.05, max_value=5.0), min_size=2, max_size=20)
    )
    @settings(max_examples=50, deadline=None)
    def test_random_measures_are_valid(self, base, spacings):
        """Test random gap-free measures satisfy the layout invariants."""
        m = CellMeasure.from_spacings(base, spacings)
        self.assertTrue(m.is_contiguous)
        self.assertAlmostEqual(float(np.sum(m.spacings)), TWO_PI, places=10)
        self.assertTrue(-np.pi <= m.base < np.pi)

    @given(
        st.floats(min_value=-np.pi, max_value=3.1),
        st.lists(st.floats(min_value=0.05, max_value=5.0), min_size=2, max_size=24)
    )
    @settings(max_examples=40, deadline=None)
    def test_density_round_trip_stays_close(self, base, spacings):
        """Test cells -> grid -> cells moves the measure by at most 4 pi / N."""
        m = CellMeasure.from_spacings(base, spacings)
        M = 1 << int(np.ceil(np.log2(4 * m.N)))
        back = from_density(to_density(m, M), m.N)
        self.assertEqual(back.N, m.N)
        self.assertLessEqual(np.sqrt(dper2_quantile(m, back)), 2.0 * TWO_PI / m.N)


if __name__ == '__main__':
    unittest.main()
