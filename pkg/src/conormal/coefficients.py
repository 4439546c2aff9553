"""Matrix-valued coefficients on the circle and their pointwise algebra.

Coefficient matrices act on C^{2m} in the normal/tangential splitting used
by :mod:`conormal.fields`: the upper-left ``m x m`` block is the
normal-normal part.  Nonlinear pointwise maps (inverse, the hat transform,
conjugation) are evaluated on an oversampled grid and re-analyzed; the
truncation residual of that round trip is recorded on the result.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable

import numpy as np
from scipy.ndimage import maximum_filter1d

from .fields import analyze_array, angles, modes, synthesize_array
from .timegrid import TimeGrid


class DegenerateCoefficientError(ValueError):
    """A pointwise matrix needed for an inverse is singular at some angle."""

    def __init__(self, message: str, theta: float):
        super().__init__(f"{message} at theta={theta:.6g}")
        self.theta = theta


@dataclass(frozen=True)
class CoefficientField:
    """A ``2m x 2m`` matrix function on the circle given by Fourier series.

    ``entries[i, j, k + K]`` is the k-th Fourier coefficient of entry (i, j).
    ``residual`` is the sup-norm truncation error reported by the operation
    that produced the field (0 for fields built from exact data).
    """

    m: int
    K: int
    entries: np.ndarray
    residual: float = field(default=0.0, compare=False)

    def __post_init__(self) -> None:
        e = np.array(self.entries, dtype=complex)
        if e.shape != (2 * self.m, 2 * self.m, 2 * self.K + 1):
            raise ValueError(f"entries shape {e.shape} does not match m={self.m}, K={self.K}")
        if not np.all(np.isfinite(e)):
            raise ValueError("coefficient entries must be finite")
        e.setflags(write=False)
        object.__setattr__(self, "entries", e)

    # construction ---------------------------------------------------------
    @classmethod
    def constant(cls, matrix: np.ndarray, K: int = 0) -> "CoefficientField":
        matrix = np.asarray(matrix, dtype=complex)
        m = matrix.shape[0] // 2
        e = np.zeros((2 * m, 2 * m, 2 * K + 1), dtype=complex)
        e[:, :, K] = matrix
        return cls(m, K, e)

    @classmethod
    def identity(cls, m: int, K: int = 0) -> "CoefficientField":
        return cls.constant(np.eye(2 * m), K)

    @classmethod
    def from_values(cls, values: np.ndarray, K: int) -> "CoefficientField":
        """Analyze samples ``values[theta_index, i, j]`` on a uniform grid."""
        values = np.asarray(values, dtype=complex)
        m = values.shape[1] // 2
        coeffs = analyze_array(np.moveaxis(values, 0, -1), K)
        back = np.moveaxis(synthesize_array(coeffs, values.shape[0]), -1, 0)
        res = float(np.max(np.abs(back - values))) if values.size else 0.0
        return cls(m, K, coeffs, residual=res)

    @classmethod
    def from_function(
        cls, func: Callable[[np.ndarray], np.ndarray], m: int, K: int, oversample: int = 4
    ) -> "CoefficientField":
        """Sample ``func(theta) -> (n, 2m, 2m)`` on ``oversample*(2K+1)`` points."""
        n = oversample * (2 * K + 1)
        vals = np.asarray(func(angles(n)), dtype=complex).reshape(n, 2 * m, 2 * m)
        return cls.from_values(vals, K)

    # evaluation -----------------------------------------------------------
    def values(self, n: int) -> np.ndarray:
        """Samples ``(n, 2m, 2m)`` at the uniform angles ``angles(n)``."""
        return np.moveaxis(synthesize_array(self.entries, n), -1, 0)

    def dealiased_gridsize(self, K_out: int | None = None) -> int:
        return 4 * (2 * max(self.K, K_out or 0) + 1)

    def truncate(self, K: int) -> "CoefficientField":
        """Re-index to truncation ``K`` (zero padding or cutting high modes)."""
        e = np.zeros((2 * self.m, 2 * self.m, 2 * K + 1), dtype=complex)
        kk = min(K, self.K)
        e[:, :, K - kk : K + kk + 1] = self.entries[:, :, self.K - kk : self.K + kk + 1]
        return CoefficientField(self.m, K, e)

    @property
    def blocks(self) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
        m = self.m
        e = self.entries
        return e[:m, :m], e[:m, m:], e[m:, :m], e[m:, m:]

    def adjoint(self) -> "CoefficientField":
        """Pointwise conjugate transpose."""
        e = np.conj(np.transpose(self.entries, (1, 0, 2)))[:, :, ::-1]
        return CoefficientField(self.m, self.K, e)

    def __add__(self, other: "CoefficientField") -> "CoefficientField":
        K = max(self.K, other.K)
        return CoefficientField(self.m, K, self.truncate(K).entries + other.truncate(K).entries)

    def __sub__(self, other: "CoefficientField") -> "CoefficientField":
        K = max(self.K, other.K)
        return CoefficientField(self.m, K, self.truncate(K).entries - other.truncate(K).entries)

    def __mul__(self, scalar: complex) -> "CoefficientField":
        return CoefficientField(self.m, self.K, self.entries * scalar)

    __rmul__ = __mul__

    def sup_norm(self, n: int | None = None) -> float:
        """Max over a dense grid of the spectral norm of the pointwise matrix."""
        vals = self.values(n or self.dealiased_gridsize())
        return float(np.max(np.linalg.norm(vals, ord=2, axis=(1, 2))))

    def max_entry_error(self, other: "CoefficientField", n: int | None = None) -> float:
        """``max |A(x)_ij - B(x)_ij|`` over a dense grid."""
        K = max(self.K, other.K)
        n = n or 4 * (2 * K + 1)
        return float(np.max(np.abs(self.values(n) - other.values(n))))

    @cached_property
    def kappa_pointwise(self) -> float:
        return accretivity_pointwise(self)

    @cached_property
    def kappa_garding(self) -> float:
        return max(accretivity_garding(self), 0.0)

    @property
    def accretive(self) -> bool:
        return self.kappa_garding > 0


def pointwise_map(
    A: CoefficientField,
    fn: Callable[[np.ndarray, np.ndarray], np.ndarray],
    K_out: int | None = None,
    tol: float | None = None,
    K_max: int = 1024,
) -> CoefficientField:
    """Apply ``fn(values, thetas)`` on the dealiased grid and re-analyze.

    With ``tol`` the truncation is doubled (starting from ``K_out``) until
    the reported residual drops below ``tol`` or ``K_max`` is reached.
    """
    K_out = A.K if K_out is None else K_out
    while True:
        n = A.dealiased_gridsize(K_out)
        out = CoefficientField.from_values(fn(A.values(n), angles(n)), K_out)
        if tol is None or out.residual < tol or K_out >= K_max:
            return out
        K_out = min(2 * max(K_out, 1), K_max)


def _checked_inverse(mats: np.ndarray, thetas: np.ndarray, what: str) -> np.ndarray:
    cond = np.linalg.cond(mats)
    bad = ~np.isfinite(cond) | (cond > 1e13)
    if np.any(bad):
        raise DegenerateCoefficientError(f"singular {what}", float(thetas[np.argmax(bad)]))
    return np.linalg.inv(mats)


def _hat_values(vals: np.ndarray, thetas: np.ndarray, m: int) -> np.ndarray:
    a, b = vals[:, :m, :m], vals[:, :m, m:]
    c, d = vals[:, m:, :m], vals[:, m:, m:]
    ai = _checked_inverse(a, thetas, "normal-normal block")
    out = np.empty_like(vals)
    out[:, :m, :m] = ai
    out[:, :m, m:] = -ai @ b
    out[:, m:, :m] = c @ ai
    out[:, m:, m:] = d - c @ ai @ b
    return out


def hat_transform(
    A: CoefficientField, K_out: int | None = None, tol: float | None = None
) -> CoefficientField:
    """The self-inverse block transform ``A -> hat(A)``.

    For ``A = [[a, b], [c, d]]`` in the normal/tangential splitting,
    ``hat(A) = [[a^-1, -a^-1 b], [c a^-1, d - c a^-1 b]]``.
    """
    return pointwise_map(A, lambda v, th: _hat_values(v, th, A.m), K_out, tol)


def _J(m: int) -> np.ndarray:
    eye = np.eye(m)
    z = np.zeros((m, m))
    return np.block([[z, -eye], [eye, z]])


def conjugate_coefficients(
    A: CoefficientField, K_out: int | None = None, tol: float | None = None
) -> CoefficientField:
    """Coefficients ``J^t A^{-1} J`` of the conjugate system."""
    J = _J(A.m)

    def fn(v: np.ndarray, th: np.ndarray) -> np.ndarray:
        return J.T @ _checked_inverse(v, th, "coefficient matrix") @ J

    return pointwise_map(A, fn, K_out, tol)


def pointwise_inverse(
    A: CoefficientField, K_out: int | None = None, tol: float | None = None
) -> CoefficientField:
    return pointwise_map(A, lambda v, th: _checked_inverse(v, th, "coefficient matrix"), K_out, tol)


def multiplication_matrix(B: CoefficientField, K: int) -> np.ndarray:
    """Matrix of ``f -> B f`` on sections truncated at ``K`` (block Toeplitz).

    Rows and columns are ordered component-major like ``BoundarySection.vector``.
    """
    m2 = 2 * B.m
    n = 2 * K + 1
    ks = modes(K)
    diff = ks[:, None] - ks[None, :]
    inside = np.abs(diff) <= B.K
    idx = np.clip(diff + B.K, 0, 2 * B.K)
    T = B.entries[:, :, idx] * inside[None, None]
    return np.transpose(T, (0, 2, 1, 3)).reshape(m2 * n, m2 * n)


def _h1_mask(m: int, K: int) -> np.ndarray:
    """Coordinates of the discretized H_1 = {g : mean of g_par = 0}."""
    mask = np.ones((2 * m, 2 * K + 1), dtype=bool)
    mask[m:, K] = False
    return mask.reshape(-1)


def accretivity_garding(A: CoefficientField, sigma: float = 0.0, K: int | None = None) -> float:
    """Smallest value of ``Re(A g, g) / |g|^2`` over the discretized H_1.

    ``sigma`` is accepted for interface symmetry; on the circle the
    constraint space does not depend on it.
    """
    K = A.K if K is None else K
    M = multiplication_matrix(A, K)
    keep = _h1_mask(A.m, K)
    H = M[np.ix_(keep, keep)]
    H = 0.5 * (H + H.conj().T)
    return float(np.linalg.eigvalsh(H)[0])


def accretivity_pointwise(A: CoefficientField, n: int | None = None) -> float:
    """``min_theta lambda_min((A + A^*)/2)`` on a dense grid."""
    vals = A.values(n or A.dealiased_gridsize())
    herm = 0.5 * (vals + np.conj(np.transpose(vals, (0, 2, 1))))
    return float(np.min(np.linalg.eigvalsh(herm)[:, 0]))


def pullback_coefficients(
    A_image: CoefficientField, jacobian: np.ndarray, K_out: int | None = None
) -> CoefficientField:
    """Pull coefficients back through a map with the given Jacobians.

    ``A_image`` holds the coefficients already composed with the map,
    ``jacobian[i]`` is the real 2x2 Jacobian at ``angles(len(jacobian))[i]``
    in the normal/tangential frame.  Returns ``|det J| J^{-1} A (J^t)^{-1}``.
    """
    jac = np.asarray(jacobian, dtype=float)
    n = jac.shape[0]
    det = np.linalg.det(jac)
    if np.any(np.abs(det) < 1e-13):
        raise DegenerateCoefficientError("singular jacobian", float(angles(n)[np.argmin(np.abs(det))]))
    eye = np.eye(A_image.m)
    Ji = np.array([np.kron(np.linalg.inv(J), eye) for J in jac])
    vals = A_image.values(n)
    out = np.abs(det)[:, None, None] * (Ji @ vals @ np.transpose(Ji, (0, 2, 1)))
    return CoefficientField.from_values(out, A_image.K if K_out is None else K_out)


def random_accretive(
    rng: np.random.Generator,
    m: int,
    K: int,
    bandwidth: int = 2,
    strength: float = 0.3,
    hermitean: bool = False,
    block: bool = False,
) -> CoefficientField:
    """Identity plus a smooth random perturbation of small sup norm.

    With ``strength < 1`` the result is pointwise strictly accretive.
    """
    m2 = 2 * m
    e = np.zeros((m2, m2, 2 * K + 1), dtype=complex)
    bw = min(bandwidth, K)
    damp = np.exp(-np.abs(np.arange(-bw, bw + 1)))
    pert = (rng.standard_normal((m2, m2, 2 * bw + 1)) + 1j * rng.standard_normal((m2, m2, 2 * bw + 1))) * damp
    if hermitean:
        pert = 0.5 * (pert + np.conj(np.transpose(pert, (1, 0, 2)))[:, :, ::-1])
    if block:
        pert[:m, m:] = 0.0
        pert[m:, :m] = 0.0
    P = CoefficientField(m, bw, pert)
    scale = strength / max(P.sup_norm(), 1e-300)
    e[:, :, K - bw : K + bw + 1] = pert * scale
    e[:, :, K] += np.eye(m2)
    return CoefficientField(m, K, e)


# ---------------------------------------------------------------------------
# radial discrepancy


@dataclass(frozen=True)
class Discrepancy:
    """Cell averages of ``E_t = B_0 - B_t`` on a time grid.

    ``cells[j]`` holds the Fourier entries of the cell average on
    ``grid``'s j-th cell, with the same truncation as ``base``.
    """

    base: CoefficientField
    grid: TimeGrid
    cells: np.ndarray

    def __post_init__(self) -> None:
        c = np.array(self.cells, dtype=complex)
        m2 = 2 * self.base.m
        if c.shape != (self.grid.n, m2, m2, 2 * self.base.K + 1):
            raise ValueError(f"discrepancy cells shape {c.shape} inconsistent with base/grid")
        c.setflags(write=False)
        object.__setattr__(self, "cells", c)

    @classmethod
    def zero(cls, base: CoefficientField, grid: TimeGrid) -> "Discrepancy":
        m2 = 2 * base.m
        return cls(base, grid, np.zeros((grid.n, m2, m2, 2 * base.K + 1)))

    @classmethod
    def from_profile(
        cls, base: CoefficientField, grid: TimeGrid, profile: Callable[[float, float], float], E: CoefficientField
    ) -> "Discrepancy":
        """``E_t = p(t) E`` with ``profile(a, b)`` the average of ``p`` over ``[a, b]``."""
        E = E.truncate(base.K)
        w = np.array([profile(a, b) for a, b in zip(grid.left, grid.right)])
        return cls(base, grid, w[:, None, None, None] * E.entries[None])

    @classmethod
    def from_radial(
        cls,
        coeff_at: Callable[[float], CoefficientField],
        grid: TimeGrid,
        K: int,
        support: float = np.inf,
    ) -> "Discrepancy":
        """Build ``B_0 = hat(A_1)`` and cell averages of ``B_0 - hat(A_t)``.

        ``coeff_at(t)`` returns the coefficients on the circle of radius
        ``exp(-t)``.  Cells starting at or beyond ``support`` are set to zero.
        Averages use two-point Gauss quadrature in each cell.
        """
        base = hat_transform(coeff_at(0.0), K)
        g = 0.5 / np.sqrt(3.0)
        m2 = 2 * base.m
        cells = np.zeros((grid.n, m2, m2, 2 * K + 1), dtype=complex)
        for j, (a, b) in enumerate(zip(grid.left, grid.right)):
            if a >= support:
                continue
            mid, h = 0.5 * (a + b), b - a
            acc = np.zeros((m2, m2, 2 * K + 1), dtype=complex)
            for s in (mid - g * h, mid + g * h):
                acc += base.entries - hat_transform(coeff_at(s), K).entries
            cells[j] = 0.5 * acc
        return cls(base, grid, cells)

    @property
    def m(self) -> int:
        return self.base.m

    @property
    def K(self) -> int:
        return self.base.K

    def cell(self, j: int) -> CoefficientField:
        return CoefficientField(self.m, self.K, self.cells[j])

    @cached_property
    def support(self) -> np.ndarray:
        """Indices of cells with a nonzero discrepancy."""
        mag = np.max(np.abs(self.cells.reshape(self.grid.n, -1)), axis=1)
        return np.flatnonzero(mag > 0)

    @property
    def is_zero(self) -> bool:
        return self.support.size == 0

    def scaled(self, eps: float) -> "Discrepancy":
        return Discrepancy(self.base, self.grid, eps * self.cells)

    def adjoint(self) -> "Discrepancy":
        """The discrepancy of ``A^*``: base ``N B_0^* N`` and cells ``N E_t^* N``."""
        m = self.m
        sign = np.ones(2 * m)
        sign[:m] = -1.0
        S = sign[:, None] * sign[None, :]
        base = self.base.adjoint()
        base = CoefficientField(m, self.K, base.entries * S[:, :, None])
        cells = np.conj(np.transpose(self.cells, (0, 2, 1, 3)))[..., ::-1] * S[None, :, :, None]
        return Discrepancy(base, self.grid, cells)

    def pointwise_norms(self, n: int) -> np.ndarray:
        """Spectral norm of ``E`` on each cell at ``angles(n)``: shape ``(cells, n)``."""
        vals = np.moveaxis(synthesize_array(self.cells, n), -1, 1)
        return np.linalg.norm(vals, ord=2, axis=(2, 3))

    def sup_norm(self, n: int | None = None) -> float:
        if self.is_zero:
            return 0.0
        n = n or max(64, 4 * (2 * self.K + 1))
        return float(np.max(self.pointwise_norms(n)))

    def carleson_norm(self, tau: float | None = None, **kw) -> float:
        return carleson_norm(self, tau=tau, **kw)


WHITNEY_C0 = 2.0
WHITNEY_C1 = 0.5


def carleson_norm(
    E: Discrepancy,
    tau: float | None = None,
    n_theta: int | None = None,
    q: float = 2.0 ** -0.25,
    r0: float = 0.25,
    c0: float = WHITNEY_C0,
    c1: float = WHITNEY_C1,
) -> float:
    """Discretized modified Carleson norm of a discrepancy.

    The supremum runs over arcs of radius ``2^-j <= r0`` centred at every
    grid angle.  Inside each Carleson box the Whitney supremum of ``|E|``
    is squared and integrated against ``dt dx / t`` using the geometric
    nodes ``t_l = r0 q^l`` down to the first cell edge of the grid.
    With ``tau`` the discrepancy is first cut off to ``t < tau``.
    """
    if E.is_zero:
        return 0.0
    n = n_theta or max(256, 4 * (2 * E.K + 1))
    dth = 2 * np.pi / n
    norms = E.pointwise_norms(n)
    left = E.grid.left.copy()
    right = E.grid.right.copy()
    if tau is not None:
        right = np.minimum(right, tau)
    alive = right > left
    t_floor = E.grid.edges[1]
    L = int(np.floor(np.log(t_floor / r0) / np.log(q)))
    ts = r0 * q ** np.arange(L + 1)
    dlog = np.log(1.0 / q)
    # Whitney sup squared at each node t_l and angle
    W2 = np.zeros((ts.size, n))
    for li, t in enumerate(ts):
        hit = alive & (right > t / c0) & (left < c0 * t)
        if not np.any(hit):
            continue
        col = np.max(norms[hit], axis=0)
        half = int(np.floor(c1 * t / dth))
        W2[li] = maximum_filter1d(col, size=2 * half + 1, mode="wrap") ** 2
    best = 0.0
    j = 2
    while 2.0 ** -j > t_floor:
        rho = 2.0 ** -j
        j += 1
        below = ts < rho
        if not np.any(below):
            continue
        prof = W2[below].sum(axis=0) * dlog
        half = int(np.floor(rho / dth))
        win = 2 * half + 1
        ext = np.concatenate([prof[n - half :], prof, prof[:half]])
        csum = np.concatenate([[0.0], np.cumsum(ext)])
        boxes = (csum[win:] - csum[:-win]) / win
        best = max(best, float(np.max(boxes)))
    return float(np.sqrt(best))
