"""
Periodic probability measures on the circle [-pi, pi).

Measures are stored in quantile (Lagrangian) form as N equal-mass cells,
in atomic form for transport computations, and in grid (Eulerian) form
for Fourier methods.
"""

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np
from scipy.optimize import brentq


TWO_PI = 2.0 * np.pi
MASS_TOL = 1e-12


def wrap(x):
    """
    Map angles to the representative in [-pi, pi).

    Args:
        x: Scalar or array of finite reals

    Returns:
        Wrapped value(s), same shape as the input
    """
    arr = np.asarray(x, dtype=float)
    out = np.mod(arr + np.pi, TWO_PI) - np.pi
    out = np.where(out >= np.pi, out - TWO_PI, out)
    if np.ndim(out) == 0:
        return float(out)
    return out


def point_dist(x, y):
    """Geodesic distance on the circle, always in [0, pi]."""
    return np.abs(wrap(np.asarray(x, dtype=float) - np.asarray(y, dtype=float)))


@dataclass(frozen=True, eq=False)
class CellMeasure:
    """
    Periodic probability measure as N cells of mass 1/N each.

    Cell i is the arc [lefts[i], lefts[i] + spacings[i]] carrying the
    uniform density 1/(N * spacings[i]). Left endpoints form a monotone
    lift starting at the base point in [-pi, pi). Contiguous layouts have
    lefts[i+1] = lefts[i] + spacings[i] and total length 2*pi; gapped
    layouts (Cantor sets, mollified atoms) leave mass-free arcs between
    cells.
    """

    lefts: np.ndarray
    spacings: np.ndarray

    def __post_init__(self):
        lefts = np.array(self.lefts, dtype=float)
        h = np.array(self.spacings, dtype=float)
        if lefts.ndim != 1 or lefts.shape != h.shape:
            raise ValueError("lefts and spacings must be 1-D arrays of equal length")
        if h.size < 2:
            raise ValueError("N must be >= 2")
        if not (np.all(np.isfinite(lefts)) and np.all(np.isfinite(h))):
            raise ValueError("cell data must be finite")
        if np.any(h <= 0.0):
            raise ValueError("spacings must be positive")
        if not (-np.pi <= lefts[0] < np.pi):
            raise ValueError("base must lie in [-pi, pi)")
        rights = lefts + h
        tol = 1e-12 * TWO_PI
        if np.any(lefts[1:] < rights[:-1] - tol):
            raise ValueError("cells must be ordered and non-overlapping")
        if rights[-1] > lefts[0] + TWO_PI + tol:
            raise ValueError("cells must fit in one period")
        lefts.setflags(write=False)
        h.setflags(write=False)
        object.__setattr__(self, 'lefts', lefts)
        object.__setattr__(self, 'spacings', h)

    @classmethod
    def contiguous(cls, base: float, spacings) -> 'CellMeasure':
        """Build a gap-free measure from a base point and spacings as given."""
        h = np.asarray(spacings, dtype=float)
        base = wrap(base)
        lefts = base + np.concatenate(([0.0], np.cumsum(h[:-1])))
        return cls(lefts, h)

    @classmethod
    def from_spacings(cls, base: float, spacings) -> 'CellMeasure':
        """Build a gap-free measure, renormalizing the spacings to total 2*pi."""
        h = np.asarray(spacings, dtype=float)
        if np.any(h <= 0.0):
            raise ValueError("spacings must be positive")
        return cls.contiguous(base, h * (TWO_PI / np.sum(h)))

    @classmethod
    def from_nodes(cls, nodes) -> 'CellMeasure':
        """
        Build a gap-free measure from lifted cell endpoints X_0 < ... < X_{N-1}.

        The closing endpoint is X_0 + 2*pi.
        """
        nodes = np.asarray(nodes, dtype=float)
        shift = wrap(nodes[0]) - nodes[0]
        ext = np.append(nodes, nodes[0] + TWO_PI) + shift
        return cls(ext[:-1], np.diff(ext))

    @property
    def N(self) -> int:
        return int(self.spacings.size)

    @property
    def base(self) -> float:
        return float(self.lefts[0])

    @property
    def rights(self) -> np.ndarray:
        return self.lefts + self.spacings

    @property
    def midpoints(self) -> np.ndarray:
        """Lifted cell midpoints."""
        return self.lefts + 0.5 * self.spacings

    @property
    def densities(self) -> np.ndarray:
        return 1.0 / (self.N * self.spacings)

    @property
    def density_max(self) -> float:
        return float(np.max(self.densities))

    @property
    def min_spacing(self) -> float:
        return float(np.min(self.spacings))

    @property
    def is_contiguous(self) -> bool:
        gaps = np.append(self.lefts[1:], self.lefts[0] + TWO_PI) - self.rights
        return bool(np.all(np.abs(gaps) <= 1e-12 * TWO_PI))

    @property
    def nodes(self) -> np.ndarray:
        """Lifted left endpoints, the free coordinates of a gap-free layout."""
        return self.lefts.copy()

    def quantile(self, s):
        """
        Evaluate the lifted quantile function X(s), extended by X(s+1) = X(s) + 2*pi.

        Args:
            s: Mass level(s)

        Returns:
            Lifted position(s)
        """
        s = np.asarray(s, dtype=float)
        shift = np.floor(s)
        frac = s - shift
        scaled = frac * self.N
        idx = np.clip(np.floor(scaled).astype(int), 0, self.N - 1)
        out = self.lefts[idx] + (scaled - idx) * self.spacings[idx] + TWO_PI * shift
        return float(out) if out.ndim == 0 else out

    def cdf(self, x):
        """
        Lifted cumulative distribution, F(base) = 0 and F(x + 2*pi) = F(x) + 1.

        Args:
            x: Position(s)

        Returns:
            Cumulative mass at x
        """
        x = np.asarray(x, dtype=float)
        turns = np.floor((x - self.base) / TWO_PI)
        local = x - TWO_PI * turns
        xp = np.column_stack((self.lefts, self.rights)).ravel()
        levels = np.arange(self.N + 1) / self.N
        fp = np.column_stack((levels[:-1], levels[1:])).ravel()
        xp = np.maximum.accumulate(np.append(xp, self.base + TWO_PI))
        fp = np.append(fp, 1.0)
        out = np.interp(local, xp, fp) + turns
        return float(out) if out.ndim == 0 else out

    def translate(self, delta: float) -> 'CellMeasure':
        """Rotate the measure by delta, keeping the base in [-pi, pi)."""
        lefts = self.lefts + delta
        shift = wrap(lefts[0]) - lefts[0]
        return CellMeasure(lefts + shift, self.spacings)

    def gap_filled(self) -> 'CellMeasure':
        """
        Close every gap by splitting it between its two neighbouring cells.

        Returns the measure itself when it is already contiguous.
        """
        if self.is_contiguous:
            return self
        next_lefts = np.append(self.lefts[1:], self.lefts[0] + TWO_PI)
        gaps = np.maximum(next_lefts - self.rights, 0.0)
        prev_gaps = np.roll(gaps, 1)
        nodes = self.lefts - 0.5 * prev_gaps
        return CellMeasure.from_nodes(nodes)


@dataclass(frozen=True, eq=False)
class AtomMeasure:
    """Weighted atoms on the circle, sorted in [-pi, pi)."""

    positions: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        pos = wrap(np.atleast_1d(np.asarray(self.positions, dtype=float)))
        w = np.atleast_1d(np.asarray(self.weights, dtype=float))
        if pos.shape != w.shape or pos.ndim != 1 or pos.size == 0:
            raise ValueError("positions and weights must be non-empty 1-D arrays of equal length")
        if np.any(w < 0.0) or not np.all(np.isfinite(w)):
            raise ValueError("weights must be finite and nonnegative")
        if abs(np.sum(w) - 1.0) > MASS_TOL:
            raise ValueError("weights must sum to 1")
        uniq, inverse = np.unique(pos, return_inverse=True)
        merged = np.bincount(inverse, weights=w)
        uniq.setflags(write=False)
        merged.setflags(write=False)
        object.__setattr__(self, 'positions', uniq)
        object.__setattr__(self, 'weights', merged)

    @classmethod
    def equal(cls, positions) -> 'AtomMeasure':
        """Atoms with equal weights 1/N."""
        positions = np.atleast_1d(np.asarray(positions, dtype=float))
        return cls(positions, np.full(positions.size, 1.0 / positions.size))

    @property
    def N(self) -> int:
        return int(self.positions.size)

    @property
    def has_equal_weights(self) -> bool:
        return bool(np.all(np.abs(self.weights - 1.0 / self.N) <= MASS_TOL))


@dataclass(frozen=True, eq=False)
class GridDensity:
    """Density sampled at the nodes x_j = -pi + 2*pi*j/M."""

    values: np.ndarray

    def __post_init__(self):
        v = np.array(self.values, dtype=float)
        M = v.size
        if v.ndim != 1 or M < 4 or M & (M - 1):
            raise ValueError("M must be a power of two >= 4")
        if not np.all(np.isfinite(v)) or np.any(v < 0.0):
            raise ValueError("density values must be finite and nonnegative")
        mass = np.sum(v) * TWO_PI / M
        if abs(mass - 1.0) > 1e-10:
            raise ValueError(f"density must be normalized (mass {mass:.15g})")
        v.setflags(write=False)
        object.__setattr__(self, 'values', v)

    @classmethod
    def from_values(cls, values) -> 'GridDensity':
        """Normalize nonnegative samples to unit mass."""
        v = np.asarray(values, dtype=float)
        return cls(v / (np.sum(v) * TWO_PI / v.size))

    @classmethod
    def from_function(cls, func: Callable, M: int) -> 'GridDensity':
        """Sample a density function on the grid and normalize."""
        return cls.from_values(func(grid_nodes(M)))

    @property
    def M(self) -> int:
        return int(self.values.size)

    @property
    def nodes(self) -> np.ndarray:
        return grid_nodes(self.M)


def grid_nodes(M: int) -> np.ndarray:
    return -np.pi + TWO_PI * np.arange(M) / M


def uniform_measure(N: int) -> CellMeasure:
    """Uniform measure with N cells of width 2*pi/N starting at -pi."""
    if N < 2:
        raise ValueError("N must be >= 2")
    return CellMeasure.contiguous(-np.pi, np.full(N, TWO_PI / N))


def to_density(m: CellMeasure, M: int) -> GridDensity:
    """
    Deposit each cell's mass uniformly over its arc and bin it on the grid.

    Bin j is centred on node x_j with width 2*pi/M.

    Args:
        m: Cell measure
        M: Grid size (power of two)

    Returns:
        Normalized GridDensity
    """
    dx = TWO_PI / M
    edges = grid_nodes(M) - 0.5 * dx
    edges = np.append(edges, edges[0] + TWO_PI)
    mass = np.diff(m.cdf(edges))
    return GridDensity.from_values(np.maximum(mass, 0.0) / dx)


def _grid_cdf(g: GridDensity):
    """Breakpoints and cumulative mass of the piecewise-constant density, anchored at -pi."""
    M = g.M
    dx = TWO_PI / M
    v = g.values
    xp = np.concatenate(([-np.pi], -np.pi + dx * (np.arange(M) + 0.5), [np.pi]))
    seg = np.concatenate(([v[0] * 0.5 * dx], v[1:] * dx, [v[0] * 0.5 * dx]))
    fp = np.concatenate(([0.0], np.cumsum(seg)))
    return xp, fp / fp[-1]


def _inverse_cdf(xp: np.ndarray, fp: np.ndarray, levels: np.ndarray) -> np.ndarray:
    """Invert a nondecreasing piecewise-linear CDF, taking the midpoint of flat level sets."""

    def interp(k, lv):
        k = np.clip(k, 1, len(fp) - 1)
        f0, f1 = fp[k - 1], fp[k]
        span = np.where(f1 > f0, f1 - f0, 1.0)
        return xp[k - 1] + (xp[k] - xp[k - 1]) * np.clip((lv - f0) / span, 0.0, 1.0)

    lo_k = np.searchsorted(fp, levels, side='left')
    hi_k = np.searchsorted(fp, levels, side='right')
    lower = np.where(lo_k == 0, xp[0], interp(lo_k, levels))
    upper = np.where(hi_k >= len(fp), xp[-1], interp(hi_k, levels))
    return 0.5 * (lower + upper)


def from_density(g: GridDensity, N: int) -> CellMeasure:
    """
    Place N equal-mass cells by inverting the CDF at levels i/N.

    On zero-density plateaus the cell boundary is the midpoint of the
    level set.

    Args:
        g: Normalized grid density
        N: Number of cells

    Returns:
        Contiguous CellMeasure
    """
    if N < 2:
        raise ValueError("N must be >= 2")
    xp, fp = _grid_cdf(g)
    nodes = _inverse_cdf(xp, fp, np.arange(N) / N)
    return CellMeasure.from_nodes(nodes)


def from_cdf(cdf: Callable[[float], float], N: int, xtol: float = 1e-14) -> CellMeasure:
    """
    Place N equal-mass cells by exact root finding on a continuous CDF.

    Args:
        cdf: Increasing function on [-pi, pi] with cdf(-pi) = 0, cdf(pi) = 1
        N: Number of cells
        xtol: Root tolerance

    Returns:
        Contiguous CellMeasure
    """
    if N < 2:
        raise ValueError("N must be >= 2")
    nodes = [-np.pi]
    for i in range(1, N):
        level = i / N
        nodes.append(brentq(lambda x: cdf(x) - level, -np.pi, np.pi, xtol=xtol))
    return CellMeasure.from_nodes(np.array(nodes))


def atoms_of(m: CellMeasure) -> AtomMeasure:
    """Collocate each cell at its midpoint with weight 1/N."""
    return AtomMeasure.equal(wrap(m.midpoints))


def cells_from_lifts(lifts) -> CellMeasure:
    """
    Mollify an ordered system of lifted atoms into contiguous cells.

    Cell edges sit halfway between consecutive lifted atoms, with the
    periodic neighbour of the first atom at lifts[-1] - 2*pi.

    Args:
        lifts: Nondecreasing lifted atom positions spanning less than 2*pi

    Returns:
        Contiguous CellMeasure with one cell per atom
    """
    y = np.asarray(lifts, dtype=float)
    if np.any(np.diff(y) < 0.0) or y[-1] - y[0] > TWO_PI:
        raise ValueError("lifts must be nondecreasing within one period")
    prev = np.concatenate(([y[-1] - TWO_PI], y[:-1]))
    return CellMeasure.from_nodes(0.5 * (prev + y))


def cantor_measure(level: int) -> CellMeasure:
    """
    Level-n ternary Cantor construction on [-pi, pi].

    2**level cells of width 2*pi*3**-level, each of mass 2**-level.
    """
    if not 1 <= level <= 12:
        raise ValueError("level must satisfy 1 <= level <= 12")
    index = np.arange(2 ** level)
    digits = (index[:, None] >> np.arange(level - 1, -1, -1)) & 1
    scales = 3.0 ** -np.arange(1, level + 1)
    lefts = -np.pi + TWO_PI * (2 * digits) @ scales
    return CellMeasure(lefts, np.full(index.size, TWO_PI * 3.0 ** -level))


def dirac_measure(eps: float, N: int) -> CellMeasure:
    """N cells of width eps/N filling [-eps/2, eps/2], an eps-mollified atom at 0."""
    if not 0.0 < eps < TWO_PI:
        raise ValueError("eps must satisfy 0 < eps < 2*pi")
    if N < 2:
        raise ValueError("N must be >= 2")
    h = eps / N
    return CellMeasure(-0.5 * eps + h * np.arange(N), np.full(N, h))


def cosine_measure(a1: float, N: int, k: int = 1) -> CellMeasure:
    """Cells of the density 1/(2*pi) + a1*cos(k*x), by inversion of its CDF."""
    if abs(a1) >= 1.0 / TWO_PI:
        raise ValueError("a1 must satisfy |a1| < 1/(2*pi)")
    if k < 1:
        raise ValueError("k must be >= 1")
    if a1 == 0.0:
        return uniform_measure(N)
    return from_cdf(lambda x: (x + np.pi) / TWO_PI + a1 * np.sin(k * x) / k, N)


def initial_data(kind: str, N: int, params: Optional[dict] = None) -> CellMeasure:
    """
    Canonical initial data.

    Args:
        kind: One of uniform, cosine, dirac, cantor, file
        N: Cell count (ignored by cantor and file)
        params: a1 (cosine), eps (dirac), level (cantor), path (file)

    Returns:
        CellMeasure
    """
    params = params or {}
    if kind == 'uniform':
        return uniform_measure(N)
    if kind == 'cosine':
        return cosine_measure(float(params.get('a1', 0.0)), N)
    if kind == 'dirac':
        return dirac_measure(float(params.get('eps', 1e-3)), N)
    if kind == 'cantor':
        return cantor_measure(int(params.get('level', 4)))
    if kind == 'file':
        from utils.snapshots import read_measure
        path = params.get('path')
        if not path:
            raise ValueError("kind 'file' requires a path")
        return read_measure(path)
    raise ValueError(f"unknown initial data kind: {kind}")
