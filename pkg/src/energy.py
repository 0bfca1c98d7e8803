"""
Free energy of circle measures and the periodic Hilbert transform.

The free energy is nu * entropy + coeff * interaction, with the
logarithmic kernel W(x) = -(1/pi) log|sin(x/2)|. Interaction sums use
the midpoint rule for far cell pairs, a 4x4 Gauss rule for neighbouring
cells and the closed-form log integral on each cell.
"""

from dataclasses import asdict, dataclass
from typing import Tuple, Union

import numpy as np

from measure import TWO_PI, CellMeasure, GridDensity, to_density
from utils.logger import get_logger


GAUSS_NODES, GAUSS_WEIGHTS = np.polynomial.legendre.leggauss(4)
GAUSS_PAIR_WEIGHTS = np.outer(GAUSS_WEIGHTS, GAUSS_WEIGHTS) / 4.0

_weak_form_notice_logged = False


def kernel_W(x):
    """Interaction kernel -(1/pi) log|sin(x/2)|, +inf on 2*pi*Z."""
    x = np.asarray(x, dtype=float)
    on_atom = np.mod(x, TWO_PI) == 0.0
    with np.errstate(divide='ignore'):
        out = -np.log(np.abs(np.sin(0.5 * x))) / np.pi
    out = np.where(on_atom, np.inf, out)
    return float(out) if out.ndim == 0 else out


def kernel_W_prime(x):
    """W'(x) = -(1/(2 pi)) cot(x/2)."""
    x = np.asarray(x, dtype=float)
    return -0.5 / np.pi / np.tan(0.5 * x)


def kernel_W_second(x):
    """W''(x) = (1/(4 pi)) csc^2(x/2)."""
    x = np.asarray(x, dtype=float)
    return 0.25 / np.pi / np.sin(0.5 * x) ** 2


@dataclass
class EnergyReport:
    entropy: float
    interaction: float
    total: float
    nu: float
    interaction_coefficient: float

    def to_dict(self) -> dict:
        return asdict(self)


def _neighbor_pairs(N: int) -> Tuple[np.ndarray, np.ndarray]:
    if N == 2:
        return np.array([0]), np.array([1])
    i = np.arange(N)
    return i, (i + 1) % N


def _far_mask(N: int) -> np.ndarray:
    mask = ~np.eye(N, dtype=bool)
    i, j = _neighbor_pairs(N)
    mask[i, j] = False
    mask[j, i] = False
    return mask


def _self_cell(h: np.ndarray, N: int) -> np.ndarray:
    return -(np.log(0.5 * h) - 1.5) / (np.pi * N * N)


def _interaction_value(lefts: np.ndarray, rights: np.ndarray) -> float:
    """Unscaled double integral of W for cells [lefts, rights] of mass 1/N."""
    N = lefts.size
    h = rights - lefts
    mid = 0.5 * (lefts + rights)

    mask = _far_mask(N)
    diff = mid[:, None] - mid[None, :]
    far = np.sum(kernel_W(diff[mask])) / (N * N)

    i, j = _neighbor_pairs(N)
    pts_i = mid[i][:, None] + 0.5 * h[i][:, None] * GAUSS_NODES[None, :]
    pts_j = mid[j][:, None] + 0.5 * h[j][:, None] * GAUSS_NODES[None, :]
    near_w = kernel_W(pts_i[:, :, None] - pts_j[:, None, :])
    near = 2.0 * np.sum(GAUSS_PAIR_WEIGHTS[None, :, :] * near_w) / (N * N)

    return float(far + near + np.sum(_self_cell(h, N)))


def entropy(m: CellMeasure) -> float:
    """Exact entropy of the piecewise-constant density, -(1/N) sum log(N h_i)."""
    h = m.spacings
    if np.any(h <= 0.0):
        raise ValueError("spacings must be positive")
    return float(-np.mean(np.log(m.N * h)))


def interaction(m: CellMeasure, coeff: float = 0.5) -> float:
    """
    Interaction energy coeff * double integral of W(x - y) dm(x) dm(y).

    Args:
        m: Cell measure (contiguous or gapped)
        coeff: Normalization, 1/2 (PDE-consistent) or 1

    Returns:
        Interaction energy
    """
    return coeff * _interaction_value(m.lefts, m.rights)


def free_energy(m: CellMeasure, nu: float, coeff: float = 0.5) -> EnergyReport:
    """
    Free energy nu * entropy + interaction.

    Args:
        m: Cell measure
        nu: Viscosity, >= 0
        coeff: Interaction normalization

    Returns:
        EnergyReport
    """
    if nu < 0.0:
        raise ValueError("nu must be >= 0")
    ent = entropy(m)
    inter = interaction(m, coeff)
    return EnergyReport(ent, inter, nu * ent + inter, nu, coeff)


def _difference_matrix(N: int) -> np.ndarray:
    """Maps nodes X_0..X_{N-1} to spacings h_i = X_{i+1} - X_i (X_N = X_0 + 2 pi)."""
    D = -np.eye(N)
    D[np.arange(N), (np.arange(N) + 1) % N] += 1.0
    return D


def node_energy(
    nodes: np.ndarray,
    nu: float,
    coeff: float = 0.5,
    hessian: bool = True
):
    """
    Free energy of a gap-free measure with its derivatives in node coordinates.

    Args:
        nodes: Lifted left endpoints X_0 < ... < X_{N-1} < X_0 + 2*pi
        nu: Viscosity
        coeff: Interaction normalization
        hessian: Also assemble the dense Hessian

    Returns:
        Tuple of (value, gradient, hessian or None)
    """
    N = nodes.size
    ext = np.append(nodes, nodes[0] + TWO_PI)
    h = np.diff(ext)
    if np.any(h <= 0.0):
        return np.inf, None, None
    D = _difference_matrix(N)

    # entropy and self-cell terms depend on spacings only
    value_h = -nu * np.mean(np.log(N * h)) + coeff * np.sum(_self_cell(h, N))
    grad_h = -nu / (N * h) - coeff / (np.pi * N * N * h)
    curv_h = nu / (N * h * h) + coeff / (np.pi * N * N * h * h)

    grad = D.T @ grad_h
    hess = (D.T * curv_h) @ D if hessian else None

    # far pairs, midpoint rule
    mid = 0.5 * (ext[:-1] + ext[1:])
    Q = 0.5 * np.abs(D)
    mask = _far_mask(N)
    diff = mid[:, None] - mid[None, :]
    safe = np.where(mask, diff, np.pi)
    far_value = np.sum(np.where(mask, kernel_W(safe), 0.0)) / (N * N)
    grad_m = 2.0 * np.sum(np.where(mask, kernel_W_prime(safe), 0.0), axis=1) / (N * N)
    grad += coeff * (Q.T @ grad_m)
    if hessian:
        A = np.where(mask, kernel_W_second(safe), 0.0)
        Hm = 2.0 * (np.diag(A.sum(axis=1)) - A) / (N * N)
        hess += coeff * (Q.T @ Hm @ Q)

    # neighbouring cells, 4x4 Gauss rule
    i, j = _neighbor_pairs(N)
    ca = 0.5 * (1.0 - GAUSS_NODES)
    cb = 0.5 * (1.0 + GAUSS_NODES)
    pts_i = ext[i][:, None] * ca + ext[i + 1][:, None] * cb
    jl = ext[j] + np.where(j < i, TWO_PI, 0.0)
    jr = ext[j + 1] + np.where(j < i, TWO_PI, 0.0)
    pts_j = jl[:, None] * ca + jr[:, None] * cb
    dist = pts_i[:, :, None] - pts_j[:, None, :]
    weight = 2.0 * GAUSS_PAIR_WEIGHTS[None, :, :] / (N * N)
    near_value = np.sum(weight * kernel_W(dist))

    P = i.size
    idx = np.stack([i, (i + 1) % N, j, (j + 1) % N], axis=1)
    idx = np.broadcast_to(idx[:, None, None, :], (P, 4, 4, 4)).reshape(-1, 4)
    coef = np.zeros((4, 4, 4))
    coef[:, :, 0] = ca[:, None]
    coef[:, :, 1] = cb[:, None]
    coef[:, :, 2] = -ca[None, :]
    coef[:, :, 3] = -cb[None, :]
    coef = np.broadcast_to(coef[None], (P, 4, 4, 4)).reshape(-1, 4)
    w1 = (weight * kernel_W_prime(dist)).reshape(-1)
    grad += np.bincount(idx.ravel(), weights=(coeff * w1[:, None] * coef).ravel(), minlength=N)
    if hessian:
        w2 = (weight * kernel_W_second(dist)).reshape(-1)
        blocks = coeff * w2[:, None, None] * coef[:, :, None] * coef[:, None, :]
        flat = (idx[:, :, None] * N + idx[:, None, :]).ravel()
        hess += np.bincount(flat, weights=blocks.ravel(), minlength=N * N).reshape(N, N)

    value = value_h + coeff * (far_value + near_value)
    return float(value), grad, hess


def _as_values(g: Union[GridDensity, np.ndarray]) -> np.ndarray:
    values = g.values if isinstance(g, GridDensity) else np.asarray(g, dtype=float)
    M = values.size
    if M < 4 or M & (M - 1):
        raise ValueError("M must be a power of two >= 4")
    return values


def hilbert_symbol(M: int) -> np.ndarray:
    """Fourier multiplier -i sgn(k) on the rfft modes of an M-point grid, zero at the Nyquist mode."""
    k = np.fft.rfftfreq(M, 1.0 / M)
    sign = np.sign(k)
    sign[-1] = 0.0
    return -1j * sign


def hilbert_transform(g: Union[GridDensity, np.ndarray]) -> np.ndarray:
    """
    Periodic Hilbert transform by the Fourier multiplier -i sgn(k).

    The mean mode and the Nyquist mode map to zero.
    """
    values = _as_values(g)
    M = values.size
    return np.fft.irfft(hilbert_symbol(M) * np.fft.rfft(values), n=M)


def hilbert_transform_pv(g: Union[GridDensity, np.ndarray]) -> np.ndarray:
    """
    Principal-value quadrature of (1/2 pi) PV int cot((x - y)/2) u(y) dy.

    Rectangle rule on the nodes at odd index offsets, which step over the
    singularity symmetrically.
    """
    values = _as_values(g)
    M = values.size
    offset = np.subtract.outer(np.arange(M), np.arange(M))
    odd = np.mod(offset, 2) == 1
    angle = np.where(odd, np.pi * offset / M, 0.5 * np.pi)
    kernel = np.where(odd, 1.0 / np.tan(angle), 0.0)
    dx = TWO_PI / M
    return (2.0 * dx / TWO_PI) * kernel @ values


def interaction_velocity(m: CellMeasure, M: int) -> np.ndarray:
    """
    Derivative of W * u on the grid, from the cosine series of W.

    W has Fourier symbol 1/|k| away from the mean mode, so the derivative
    of the convolution has symbol i k / |k|.
    """
    u = to_density(m, M).values
    return np.fft.irfft(-hilbert_symbol(M) * np.fft.rfft(u), n=M)


def _test_function(k: int, kind: str):
    if kind == 'cos':
        return (lambda x: np.cos(k * x), lambda x: -k * np.sin(k * x))
    if kind == 'sin':
        return (lambda x: np.sin(k * x), lambda x: k * np.cos(k * x))
    raise ValueError("kind must be 'cos' or 'sin'")


def fourier_moment(m: CellMeasure, k: int, kind: str = 'cos') -> float:
    """Exact integral of cos(kx) or sin(kx) against the cell measure."""
    if k == 0:
        return 1.0 if kind == 'cos' else 0.0
    a, b = m.lefts, m.rights
    if kind == 'cos':
        cell = (np.sin(k * b) - np.sin(k * a)) / k
    else:
        cell = (np.cos(k * a) - np.cos(k * b)) / k
    return float(np.sum(cell * m.densities))


def weak_form_rhs(m: CellMeasure, k: int, nu: float, coeff: float, kind: str = 'cos') -> float:
    """
    Right-hand side of the distributional equation for one test function.

    nu * int phi'' dm + (coeff / (2 pi)) * double integral of
    cot((x - y)/2) (phi'(x) - phi'(y)); the diagonal uses the limit 2 phi''.
    """
    if k == 0:
        return 0.0
    N = m.N
    phi, dphi = _test_function(k, kind)
    mid = m.midpoints
    diffusion = -nu * k * k * fourier_moment(m, k, kind)

    diff = mid[:, None] - mid[None, :]
    off = ~np.eye(N, dtype=bool)
    safe = np.where(off, diff, np.pi)
    slope = dphi(mid)[:, None] - dphi(mid)[None, :]
    pairs = np.sum(np.where(off, slope / np.tan(0.5 * safe), 0.0))
    diagonal = np.sum(2.0 * (-k * k) * phi(mid))
    double = (pairs + diagonal) / (N * N)

    return float(diffusion + coeff / TWO_PI * double)


def weak_form_residual(traj, k: int, t: float, kind: str = 'cos') -> float:
    """
    Residual of the distributional form of the flow at time t.

    The time derivative of int phi dmu_t is a central difference over the
    neighbouring snapshots of the trajectory.

    Args:
        traj: FlowTrajectory with at least one snapshot on each side of t
        k: Fourier mode of the test function
        t: Time, must coincide with a recorded time
        kind: 'cos' or 'sin'

    Returns:
        Absolute residual
    """
    global _weak_form_notice_logged
    if not _weak_form_notice_logged:
        get_logger().info(
            "Weak form uses the interaction coefficient +coeff/(2*pi) "
            "(+1/(4*pi) at coeff = 1/2)"
        )
        _weak_form_notice_logged = True

    times = np.asarray(traj.times, dtype=float)
    i = int(np.argmin(np.abs(times - t)))
    if abs(times[i] - t) > 1e-9 * max(1.0, abs(t)) or i == 0 or i == times.size - 1:
        raise ValueError(f"t = {t} outside trajectory range")

    before = fourier_moment(traj.snapshots[i - 1], k, kind)
    after = fourier_moment(traj.snapshots[i + 1], k, kind)
    lhs = (after - before) / (times[i + 1] - times[i - 1])
    rhs = weak_form_rhs(traj.snapshots[i], k, traj.nu, traj.coeff, kind)
    return float(abs(lhs - rhs))
