"""Norms of trajectories and solutions: Y, X, non-tangential maximal functions, reverse Hoelder.

A *sampler* is any callable ``ts -> (len(ts), dim)`` returning flat section
vectors at the given times ``t = ln(1/r)``; trajectories, solutions and
closed-form test fields are all turned into samplers.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .coefficients import WHITNEY_C0, WHITNEY_C1
from .fields import PolarGridFunction, angles, modes
from .timegrid import TimeGrid

Sampler = Callable[[np.ndarray], np.ndarray]

_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(6)


def trajectory_sampler(traj) -> Sampler:
    """Piecewise-constant sampler of a cell trajectory (zero past the last cell)."""
    grid = traj.grid

    def sample(ts: np.ndarray) -> np.ndarray:
        ts = np.asarray(ts, dtype=float)
        idx = grid.locate(ts)
        out = traj.values[idx].copy()
        out[ts > grid.t_max] = 0.0
        return out

    return sample


def _composite_nodes(t_min: float, t_max: float, q: float = 2.0**-0.25) -> tuple[np.ndarray, np.ndarray]:
    """Gauss-Legendre nodes on a geometric partition of ``[0, t_max]``."""
    split = min(1.0, 0.5 * t_max)
    grid = TimeGrid.geometric(t_min=min(t_min, 0.5 * split), t_max=t_max, q=q, split=split, max_width=0.25)
    a, h = grid.left[:, None], grid.widths[:, None]
    nodes = a + 0.5 * h * (1 + _GL_NODES[None, :])
    weights = 0.5 * h * _GL_WEIGHTS[None, :]
    return nodes.ravel(), weights.ravel()


def weighted_l2(sampler: Sampler, weight: Callable[[np.ndarray], np.ndarray], t_max: float = 40.0,
                t_min: float = 1e-5) -> float:
    """``int_0^t_max ||f_t||^2 w(t) dt`` with the ``2 pi`` circle measure."""
    ts, ws = _composite_nodes(t_min, t_max)
    vals = sampler(ts)
    sq = 2 * np.pi * np.sum(np.abs(vals) ** 2, axis=1)
    return float(np.sum(ws * weight(ts) * sq))


def _abs2_coeffs(vecs: np.ndarray, m2: int, K: int) -> np.ndarray:
    """Fourier coefficients (modes -2K..2K) of ``sum_c |g_c(theta)|^2`` for each row."""
    n = 2 * K + 1
    g = vecs.reshape(vecs.shape[0], m2, n)
    L = 4 * K + 1
    pad = np.zeros((vecs.shape[0], m2, 2 * L), dtype=complex)
    pad[..., :n] = g
    G = np.fft.fft(pad, axis=-1)
    pad2 = np.zeros_like(pad)
    pad2[..., :n] = np.conj(g[..., ::-1])
    H = np.fft.fft(pad2, axis=-1)
    conv = np.fft.ifft(G * H, axis=-1)[..., :L]  # index i <-> mode i - 2K
    return conv.sum(axis=1)


def _arc_averages(c2: np.ndarray, K: int, half: float, n_theta: int) -> np.ndarray:
    """Average of the trig polynomial with coefficients ``c2`` over arcs ``|y - x| < half``."""
    ks = np.arange(-2 * K, 2 * K + 1)
    half = min(half, np.pi)
    ker = np.where(ks == 0, 1.0, np.sin(ks * half) / np.where(ks == 0, 1, ks * half))
    x = angles(n_theta)
    return np.real((c2 * ker[None, :]) @ np.exp(1j * np.outer(ks, x)))


@dataclass(frozen=True)
class MaximalFunction:
    values: np.ndarray
    thetas: np.ndarray
    scales: np.ndarray

    @property
    def norm(self) -> float:
        return float(np.sqrt(np.sum(self.values**2) * 2 * np.pi / self.values.size))


def nt_maximal(
    sampler: Sampler,
    m: int,
    K: int,
    n_theta: int = 128,
    t_floor: float = 2.0**-8,
    t_top: float = 1.0,
    c0: float = WHITNEY_C0,
    c1: float = WHITNEY_C1,
    resolved_from: float | None = None,
    nodes: int = 8,
) -> MaximalFunction:
    """Whitney-averaged non-tangential maximal function on the boundary.

    ``N(x) = sup_t ( avg_{W(t, x)} |f|^2 )^{1/2}`` over dyadic ``t = 2^-j`` in
    ``[t_floor, t_top]`` with ``W(t, x) = {t/c0 < s < min(c0 t, 1), |y - x| < c1 t}``.
    Arc integrals are exact (Fourier); the ``s`` integral uses Gauss-Legendre.
    ``resolved_from`` is the smallest time resolved by the data; a warning
    is issued when ``t_floor`` goes below it.
    """
    if resolved_from is not None and t_floor / c0 < resolved_from:
        warnings.warn(f"Whitney scale floor {t_floor:g} is below the resolved time {resolved_from:g}", stacklevel=2)
    x_gl, w_gl = np.polynomial.legendre.leggauss(nodes)
    scales = []
    t = t_top
    while t >= t_floor * (1 - 1e-12):
        scales.append(t)
        t *= 0.5
    scales = np.array(scales)
    best = np.zeros(n_theta)
    for t in scales:
        lo, hi = t / c0, min(c0 * t, max(t_top, t))
        s = lo + 0.5 * (hi - lo) * (1 + x_gl)
        w = 0.5 * (hi - lo) * w_gl
        c2 = _abs2_coeffs(sampler(s), 2 * m, K)
        avg = np.einsum("s,sx->x", w, _arc_averages(c2, K, c1 * t, n_theta)) / (hi - lo)
        best = np.maximum(best, avg)
    return MaximalFunction(np.sqrt(np.maximum(best, 0.0)), angles(n_theta), scales)


def nt_maximal_grid(F: PolarGridFunction, c0: float = WHITNEY_C0, c1: float = WHITNEY_C1) -> MaximalFunction:
    """Discrete Whitney maximal function from polar grid samples (equal weights in each box)."""
    t = -np.log(F.radii)
    th = F.thetas
    sq = np.sum(np.abs(F.values) ** 2, axis=0)
    scales = np.unique(t[t > 0])
    best = np.zeros(th.size)
    for tc in scales:
        rows = (t > tc / c0) & (t < c0 * tc)
        if not np.any(rows):
            continue
        prof = sq[rows].mean(axis=0)
        d = np.abs((th[:, None] - th[None, :] + np.pi) % (2 * np.pi) - np.pi)
        mask = d < c1 * tc
        avg = (mask * prof[None, :]).sum(axis=1) / np.maximum(mask.sum(axis=1), 1)
        best = np.maximum(best, avg)
    return MaximalFunction(np.sqrt(best), th, scales)


@dataclass(frozen=True)
class NormReport:
    y_norm: float
    x_norm: float
    nt_max_norm: float
    sup_l2_norm: float
    square_fn_norm: float
    y_star_norm: float
    y_delta_norm: float
    ratios: dict


def y_x_norms(sampler: Sampler, m: int, K: int, t_max: float = 40.0, delta: float = 0.1,
              n_theta: int = 128) -> NormReport:
    """Y, X, Y* and Y_delta norms of a trajectory.

    ``||f||_Y^2 = int ||f_t||^2 min(t, 1) dt``,
    ``||f||_X^2 = ||N f||^2 + int_1^oo ||f_t||^2 dt``,
    ``||f||_{Y*}^2 = int ||f_t||^2 max(1/t, 1) dt`` and
    ``||f||_{Y_delta}^2 = int ||f_t||^2 min(t, 1) e^{delta t} dt``.
    ``square_fn_norm`` is ``int ||f_t||^2 (1 - e^{-t}) dt``.
    """
    y2 = weighted_l2(sampler, lambda t: np.minimum(t, 1.0), t_max)
    tail = weighted_l2(sampler, lambda t: (t >= 1.0).astype(float), t_max)
    ys2 = weighted_l2(sampler, lambda t: np.maximum(1.0 / np.maximum(t, 1e-300), 1.0), t_max)
    yd2 = weighted_l2(sampler, lambda t: np.minimum(t, 1.0) * np.exp(delta * t), t_max)
    sq2 = weighted_l2(sampler, lambda t: -np.expm1(-t), t_max)
    nt = nt_maximal(sampler, m, K, n_theta=n_theta).norm
    x2 = nt**2 + tail
    ts = np.geomspace(1e-4, t_max, 200)
    sup = float(np.sqrt(np.max(2 * np.pi * np.sum(np.abs(sampler(ts)) ** 2, axis=1))))
    ratios = {
        "L2_over_Y": float(np.sqrt(weighted_l2(sampler, lambda t: np.ones_like(t), t_max) / y2)) if y2 > 0 else np.nan,
        "X_over_L2": float(np.sqrt(x2 / weighted_l2(sampler, lambda t: np.ones_like(t), t_max))) if y2 > 0 else np.nan,
        "Ystar_over_X": float(np.sqrt(ys2 / x2)) if x2 > 0 else np.nan,
    }
    return NormReport(float(np.sqrt(y2)), float(np.sqrt(x2)), nt, sup, float(np.sqrt(sq2)),
                      float(np.sqrt(ys2)), float(np.sqrt(yd2)), ratios)


def local_l2_sup(sampler: Sampler, t_min: float = 2.0**-8, t_top: float = 0.5) -> float:
    """``sup_t t^-1 int_t^{2t} ||f_s||^2 ds`` over dyadic ``t``."""
    x_gl, w_gl = np.polynomial.legendre.leggauss(8)
    best = 0.0
    t = t_top
    while t >= t_min:
        s = t + 0.5 * t * (1 + x_gl)
        vals = 2 * np.pi * np.sum(np.abs(sampler(s)) ** 2, axis=1)
        best = max(best, float(np.sum(0.5 * t * w_gl * vals) / t))
        t *= 0.5
    return best


# ---------------------------------------------------------------------------
# estimates for solutions


def gradient_sampler(sol) -> Sampler:
    """``t -> ((B_t f_t)_perp, (f_t)_par)``, the rescaled gradient ``r grad u``."""
    op = sol.hardy.op
    calc = sol.hardy.calc
    pos = {c: i for i, c in enumerate(op.support)}
    n = calc.m * (2 * calc.K + 1)

    def sample(ts: np.ndarray) -> np.ndarray:
        ts = np.asarray(ts, dtype=float)
        f = sol.conormal(ts)
        Bf = f @ calc.M.T
        cells = op.grid.locate(ts)
        for i, c in enumerate(cells):
            if ts[i] <= op.grid.t_max and c in pos:
                Bf[i] -= op.cell_mult[pos[c]] @ f[i]
        return np.concatenate([Bf[:, :n], f[:, n:]], axis=1)

    return sample


def u_sampler(sol) -> Sampler:
    """``t -> u`` on the circle of radius ``e^-t`` (normal part of the potential, tangential zeroed)."""
    n = sol.hardy.calc.m * (2 * sol.hardy.calc.K + 1)

    def sample(ts: np.ndarray) -> np.ndarray:
        v = sol.potential(np.asarray(ts, dtype=float))
        v[:, n:] = 0.0
        return v

    return sample


def gradient_y0_norm_sq(sol, t_max: float = 40.0) -> float:
    """``int_disk |grad u|^2 (1 - |x|) dx = int_0^oo (1 - e^-t) ||((B f)_perp, f_par)||^2 dt``."""
    return weighted_l2(gradient_sampler(sol), lambda t: -np.expm1(-t), t_max)


@dataclass(frozen=True)
class NTEstimate:
    lhs: float
    rhs: float

    @property
    def constant(self) -> float:
        return self.lhs / self.rhs if self.rhs > 0 else float("inf")


def nt_estimate(sol, n_theta: int = 128, t_floor: float = 2.0**-8) -> NTEstimate:
    """``||N u||^2`` against ``||grad u||_{Y0}^2 + |int u_1|^2``."""
    calc = sol.hardy.calc
    nt = nt_maximal(u_sampler(sol), calc.m, calc.K, n_theta=n_theta, t_floor=t_floor).norm
    mean = sol.trace_u1.mean[: calc.m]
    rhs = gradient_y0_norm_sq(sol) + float(np.sum(np.abs(2 * np.pi * mean) ** 2))
    return NTEstimate(nt**2, rhs)


def trace_rate(sol, radii: np.ndarray | None = None) -> float:
    """``max_r ||u_r - u_1|| / (1 - r)`` over the given radii."""
    radii = np.linspace(0.5, 0.99, 25) if radii is None else np.asarray(radii)
    ts = -np.log(radii)
    samp = u_sampler(sol)
    u = samp(ts)
    u1 = samp(np.array([0.0]))[0]
    d = np.sqrt(2 * np.pi * np.sum(np.abs(u - u1[None]) ** 2, axis=1))
    return float(np.max(d / (1 - radii)))


def reverse_holder(
    grad: PolarGridFunction,
    p: float = 2.5,
    dilation: float = 2.0,
    ball_radius: float = 0.1,
    n_centers: int = 24,
) -> float:
    """Largest ``(avg_B |g|^p)^(1/p) / (avg_{2B} |g|^2)^(1/2)`` over interior balls.

    Balls ``B`` of radius ``ball_radius`` are centred on a ring of points
    with ``dilation * B`` inside the disk; averages use polar area weights.
    """
    r, th = grad.radii, grad.thetas
    mag = np.sqrt(np.sum(np.abs(grad.values) ** 2, axis=0))
    dr = np.gradient(r)
    area = (r * dr)[:, None] * np.full(th.size, 2 * np.pi / th.size)[None, :]
    X = r[:, None] * np.cos(th)[None, :]
    Y = r[:, None] * np.sin(th)[None, :]
    rc = max(0.0, 1.0 - dilation * ball_radius - 0.05)
    centers = [(rc * np.cos(a), rc * np.sin(a)) for a in angles(n_centers)] + [(0.0, 0.0)]
    best = 0.0
    for cx, cy in centers:
        d = np.hypot(X - cx, Y - cy)
        small = d < ball_radius
        big = d < dilation * ball_radius
        if small.sum() < 4:
            continue
        lp = (np.sum(area[small] * mag[small] ** p) / np.sum(area[small])) ** (1 / p)
        l2 = np.sqrt(np.sum(area[big] * mag[big] ** 2) / np.sum(area[big]))
        if l2 > 0:
            best = max(best, float(lp / l2))
    return best
