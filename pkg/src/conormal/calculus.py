"""Functional calculus of ``D0 = D B0 + sigma N`` and ``D0~ = B0 D - sigma N``.

Functions are evaluated through an eigendecomposition when its condition
number is acceptable and through the block Schur-Parlett method otherwise.
For ``sigma = 0`` neither operator is injective; functions are then defined
on the range (``H`` for ``D0``, ``B0 H`` for ``D0~``) and extended to the
null space by the one-sided limits ``b(0-)``, ``b(0+)``:

    b(D0)  = b(D0|_H) P1 + P0 (b(0-) N^- + b(0+) N^+)
    b(D0~) = B0 b(D0|_H) B0^{-1} P1~ + (b(0+) N^- + b(0-) N^+) P0~

so that ``chi+(D0) = P0 N^+`` on ``B0^{-1} H^perp`` and ``chi+(D0~) = N^-``
on constants.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.linalg import sqrtm

from .coefficients import CoefficientField, multiplication_matrix
from .fields import BoundarySection, modes
from .matfun import funm_schur_parlett
from .operators import (
    HodgeProjections,
    d_matrix,
    h_index,
    hodge_projections,
    mean_embedding,
    n_matrix,
)

EIG_CONDITION_MAX = 1e8


class SpectralGapError(ValueError):
    """An eigenvalue is too close to the imaginary axis for a half-plane function."""


# ---------------------------------------------------------------------------
# scalar functions


@dataclass(frozen=True)
class ScalarFunction:
    """A holomorphic function on the two open half planes.

    ``fn(lam, side)`` gets the half plane ``side = sign(Re lam)`` explicitly,
    which is how ``b(0-)`` and ``b(0+)`` are read off on null directions.
    ``needs_gap`` marks functions that are discontinuous across the axis.
    """

    name: str
    fn: Callable[[np.ndarray, np.ndarray], np.ndarray]
    needs_gap: bool = True

    def __call__(self, lam: np.ndarray, side: np.ndarray | None = None) -> np.ndarray:
        lam = np.asarray(lam, dtype=complex)
        if side is None:
            side = np.where(lam.real >= 0, 1.0, -1.0)
        return np.asarray(self.fn(lam, np.asarray(side, dtype=float)), dtype=complex) * np.ones_like(lam)

    def __mul__(self, other: "ScalarFunction") -> "ScalarFunction":
        return ScalarFunction(
            f"{self.name}*{other.name}",
            lambda z, s: self.fn(z, s) * other.fn(z, s),
            self.needs_gap or other.needs_gap,
        )


def sgn() -> ScalarFunction:
    return ScalarFunction("sgn", lambda z, s: s + 0 * z)


def chi_plus() -> ScalarFunction:
    return ScalarFunction("chi_plus", lambda z, s: (s > 0) + 0 * z)


def chi_minus() -> ScalarFunction:
    return ScalarFunction("chi_minus", lambda z, s: (s < 0) + 0 * z)


def abs_() -> ScalarFunction:
    """``|z| := sgn(z) z``, so ``|D0|`` has spectrum in the right half plane."""
    return ScalarFunction("abs", lambda z, s: s * z)


def exp_abs(t: float) -> ScalarFunction:
    """``exp(-t |z|)``; equal to 1 at ``z = 0`` from either side."""
    return ScalarFunction(f"exp_abs({t:g})", lambda z, s: np.exp(-t * s * z))


def psi_sf(t: float) -> ScalarFunction:
    """Square-function generator ``psi(tz) = tz / (1 + t^2 z^2)``."""
    return ScalarFunction(f"psi_sf({t:g})", lambda z, s: t * z / (1.0 + (t * z) ** 2), needs_gap=False)


def inv_sqrt_shift(sigma: float) -> ScalarFunction:
    """``(z^2 + sigma^2)^(-1/2)`` with the root of positive real part; ``1/sigma`` at 0."""
    return ScalarFunction(f"inv_sqrt_shift({sigma:g})", lambda z, s: 1.0 / np.sqrt(z * z + sigma * sigma), needs_gap=False)


NAMED_FUNCTIONS = {
    "sgn": sgn,
    "chi_plus": chi_plus,
    "chi_minus": chi_minus,
    "abs": abs_,
    "exp_abs": exp_abs,
    "psi_sf": psi_sf,
    "inv_sqrt_shift": inv_sqrt_shift,
}


def named_function(name: str, *args: float) -> ScalarFunction:
    try:
        return NAMED_FUNCTIONS[name](*args)
    except KeyError:
        raise ValueError(f"unknown function {name!r}; choose from {sorted(NAMED_FUNCTIONS)}") from None


# ---------------------------------------------------------------------------
# modal representations


@dataclass(frozen=True)
class Modal:
    """``b(A) = V diag(b(lam, side)) W`` (null directions carry ``lam = 0``)."""

    V: np.ndarray
    W: np.ndarray
    lam: np.ndarray
    side: np.ndarray

    def matrix(self, b: ScalarFunction) -> np.ndarray:
        return (self.V * b(self.lam, self.side)[None, :]) @ self.W

    def coefficients(self, values: np.ndarray) -> np.ndarray:
        """``V diag(values) W`` for precomputed per-mode values."""
        return (self.V * values[None, :]) @ self.W


@dataclass
class _Rep:
    """``b(A) = L b(core) R + sum_side b(0, side) Z_side`` for one operator."""

    core: np.ndarray
    L: np.ndarray
    R: np.ndarray
    Vz: np.ndarray
    Wz: np.ndarray
    side_z: np.ndarray
    gap_tol: float
    eig_cond_max: float
    lam: np.ndarray = field(init=False)
    Vh: np.ndarray | None = field(init=False, default=None)
    Vh_inv: np.ndarray | None = field(init=False, default=None)
    eig_condition: float = field(init=False)

    def __post_init__(self) -> None:
        lam, Vh = np.linalg.eig(self.core)
        self.lam = lam
        self.eig_condition = float(np.linalg.cond(Vh)) if lam.size else 1.0
        if self.eig_condition < self.eig_cond_max:
            self.Vh = Vh
            self.Vh_inv = np.linalg.inv(Vh)

    @property
    def uses_eigen(self) -> bool:
        return self.Vh is not None

    def _check_gap(self, b: ScalarFunction) -> None:
        if b.needs_gap and self.lam.size and np.min(np.abs(self.lam.real)) <= self.gap_tol:
            raise SpectralGapError(
                f"eigenvalue with |Re| = {np.min(np.abs(self.lam.real)):.3g} within gap_tol={self.gap_tol:.3g}"
            )

    @property
    def modal(self) -> Modal | None:
        if not self.uses_eigen:
            return None
        V = np.hstack([self.L @ self.Vh, self.Vz])
        W = np.vstack([self.Vh_inv @ self.R, self.Wz])
        lam = np.concatenate([self.lam, np.zeros(self.side_z.size)])
        side = np.concatenate([np.where(self.lam.real >= 0, 1.0, -1.0), self.side_z])
        return Modal(V, W, lam, side)

    def core_matrix(self, b: ScalarFunction) -> np.ndarray:
        self._check_gap(b)
        if self.uses_eigen:
            return (self.Vh * b(self.lam)[None, :]) @ self.Vh_inv
        return funm_schur_parlett(self.core, lambda z: b(z))

    def matrix(self, b: ScalarFunction) -> np.ndarray:
        out = self.L @ self.core_matrix(b) @ self.R
        if self.side_z.size:
            out = out + (self.Vz * b(np.zeros(self.side_z.size), self.side_z)[None, :]) @ self.Wz
        return out


class Calculus:
    """Functional calculus for ``D0`` and ``D0~`` built from ``(B0, sigma)``.

    Parameters
    ----------
    B0 : CoefficientField
        Boundary coefficients (already hat-transformed).
    sigma : float
        Shift in ``D B0 + sigma N``.  ``0`` is the disk.
    K : int, optional
        Section truncation; defaults to ``B0.K``.
    """

    def __init__(self, B0: CoefficientField, sigma: float = 0.0, K: int | None = None,
                 eig_cond_max: float = EIG_CONDITION_MAX):
        K = B0.K if K is None else K
        self.B0 = B0
        self.m = B0.m
        self.K = K
        self.sigma = float(sigma)
        self.dim = 2 * self.m * (2 * K + 1)
        self.D = d_matrix(self.m, K)
        self.N = n_matrix(self.m, K)
        self.M = multiplication_matrix(B0, K)
        self.Minv = np.linalg.inv(self.M)
        self.hodge: HodgeProjections = hodge_projections(B0, sigma, K)
        self.D0 = self.D @ self.M + self.sigma * self.N
        self.D0t = self.M @ self.D - self.sigma * self.N
        self.gap_tol = 1e-8 * np.linalg.norm(self.D0, 2)
        n_plus = np.diag((np.diag(self.N).real > 0).astype(complex))
        n_minus = np.eye(self.dim) - n_plus
        eye = np.eye(self.dim, dtype=complex)
        if self.sigma == 0.0:
            idx = h_index(self.m, K)
            Q = eye[:, idx]
            core = Q.T @ self.D0 @ Q
            E0 = mean_embedding(self.m, K)
            R0 = np.linalg.solve(self.M, E0)
            Gi = np.linalg.inv(E0.T @ R0)
            L0 = E0.T @ self.Minv
            self._rep = _Rep(
                core, Q, Q.T @ self.hodge.P1,
                np.hstack([R0, R0]),
                np.vstack([Gi @ E0.T @ n_minus, Gi @ E0.T @ n_plus]),
                np.r_[-np.ones(2 * self.m), np.ones(2 * self.m)],
                self.gap_tol, eig_cond_max,
            )
            self._rep_t = _Rep(
                core, self.M @ Q, Q.T @ self.Minv @ self.hodge.P1_tilde,
                np.hstack([n_minus @ E0, n_plus @ E0]),
                np.vstack([Gi @ L0, Gi @ L0]),
                np.r_[np.ones(2 * self.m), -np.ones(2 * self.m)],
                self.gap_tol, eig_cond_max,
            )
        else:
            empty_v = np.zeros((self.dim, 0), dtype=complex)
            empty_w = np.zeros((0, self.dim), dtype=complex)
            self._rep = _Rep(self.D0, eye, eye, empty_v, empty_w, np.zeros(0), self.gap_tol, eig_cond_max)
            self._rep_t = _Rep(self.D0t, eye, eye, empty_v, empty_w, np.zeros(0), self.gap_tol, eig_cond_max)

    # --- evaluation --------------------------------------------------------
    def matrix(self, b: ScalarFunction, tilde: bool = False) -> np.ndarray:
        return (self._rep_t if tilde else self._rep).matrix(b)

    def modal(self, tilde: bool = False) -> Modal | None:
        return (self._rep_t if tilde else self._rep).modal

    @property
    def uses_eigen(self) -> bool:
        return self._rep.uses_eigen and self._rep_t.uses_eigen

    @property
    def eig_condition(self) -> float:
        return max(self._rep.eig_condition, self._rep_t.eig_condition)

    @property
    def eigenvalues(self) -> np.ndarray:
        """Eigenvalues of ``D0`` on ``H`` (sigma = 0) or on L2."""
        return self._rep.lam

    def reconstruction_residual(self) -> float:
        r = self._rep
        if not r.uses_eigen:
            return float("nan")
        return float(np.linalg.norm((r.Vh * r.lam) @ r.Vh_inv - r.core, 2))

    def apply(self, b: ScalarFunction, f: BoundarySection, tilde: bool = False) -> BoundarySection:
        if (f.m, f.K) != (self.m, self.K):
            raise ValueError("section shape does not match the calculus")
        return BoundarySection.from_vector(self.m, self.K, self.matrix(b, tilde) @ f.vector)

    def hardy(self) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
        """``(E0+, E0-, E0~+, E0~-)`` with the null-space extension when sigma = 0."""
        return (
            self.matrix(chi_plus()),
            self.matrix(chi_minus()),
            self.matrix(chi_plus(), tilde=True),
            self.matrix(chi_minus(), tilde=True),
        )


def apply_function(handle: Calculus, b: ScalarFunction, f: BoundarySection, tilde: bool = False) -> BoundarySection:
    return handle.apply(b, f, tilde)


def extended_hardy(handle: Calculus) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    return handle.hardy()


def intertwine_check(handle: Calculus) -> float:
    """``max(||E0+- D - D E0~+-||, ||D0 D - D D0~||)`` in the spectral norm."""
    Ep, Em, Etp, Etm = handle.hardy()
    D = handle.D
    res = [
        np.linalg.norm(Ep @ D - D @ Etp, 2),
        np.linalg.norm(Em @ D - D @ Etm, 2),
        np.linalg.norm(handle.D0 @ D - D @ handle.D0t, 2),
    ]
    return float(max(res))


def similarity_residual(handle: Calculus, b: ScalarFunction) -> float:
    """``||b(D0~) B0 - B0 b(D0)||`` on ``H`` (both sides applied to mean-zero sections)."""
    idx = h_index(handle.m, handle.K)
    lhs = handle.matrix(b, tilde=True) @ handle.M
    rhs = handle.M @ handle.matrix(b)
    return float(np.linalg.norm((lhs - rhs)[:, idx], 2))


def anticommutator_residual(B0: CoefficientField, sigma: float = 1.0, K: int | None = None,
                            block_tol: float = 1e-12) -> float:
    """``||(sgn(D0) N + N sgn(D0))/2 - sigma ((D B0)^2 + sigma^2)^{-1/2}||`` for block ``B0``.

    The right side is evaluated in the sigma = 0 calculus of ``D B0`` (null
    directions take the value ``1/sigma``), so the two sides share no code
    beyond the matrix assembly.
    """
    if sigma == 0.0:
        raise ValueError("the anticommutator identity needs sigma != 0")
    _, b, c, _ = B0.blocks
    if max(np.abs(b).max(), np.abs(c).max()) > block_tol:
        raise ValueError("B0 is not block diagonal")
    shifted = Calculus(B0, sigma, K)
    S = shifted.matrix(sgn())
    lhs = 0.5 * (S @ shifted.N + shifted.N @ S)
    rhs = sigma * Calculus(B0, 0.0, K).matrix(inv_sqrt_shift(sigma))
    return float(np.linalg.norm(lhs - rhs, 2))


# ---------------------------------------------------------------------------
# square functions


@dataclass(frozen=True)
class SquareFunctionReport:
    lower: float
    upper: float
    points_per_decade: int
    drift: float

    @property
    def constant(self) -> float:
        """``C`` such that every ratio lies in ``[1/C, C]``."""
        return float(max(self.upper, 1.0 / self.lower))


class QuadratureDriftError(ValueError):
    """The square-function quadrature changed by more than the drift tolerance."""


def _log_grid(handle: Calculus, ppd: int) -> tuple[np.ndarray, np.ndarray]:
    lam = handle.eigenvalues
    rho = float(np.max(np.abs(lam)))
    gap = float(np.min(np.abs(lam)))
    lo, hi = np.log10(1e-3 / rho), np.log10(1e3 / gap)
    n = int(np.ceil((hi - lo) * ppd)) + 1
    logt = np.linspace(lo, hi, n)
    w = np.full(n, (logt[1] - logt[0]) * np.log(10.0))
    w[[0, -1]] *= 0.5
    return 10.0**logt, w


def square_function_form(handle: Calculus, points_per_decade: int = 40) -> np.ndarray:
    """The quadratic form ``Q`` with ``(Q f, f) = sum_t w_t ||psi(t D0) f||^2`` on the core space.

    The core space is ``H`` (mean-zero coordinates) for sigma = 0 and all of
    L2 otherwise.
    """
    rep = handle._rep
    ts, w = _log_grid(handle, points_per_decade)
    if rep.uses_eigen:
        lam = rep.lam
        z = ts[:, None] * lam[None, :]
        psi = z / (1.0 + z * z)
        Kmat = (psi.conj() * w[:, None]).T @ psi
        G = rep.Vh.conj().T @ rep.Vh
        inner = G * Kmat
        return rep.Vh_inv.conj().T @ inner @ rep.Vh_inv
    Q = np.zeros_like(rep.core)
    for t, wt in zip(ts, w):
        P = rep.core_matrix(psi_sf(t))
        Q += wt * P.conj().T @ P
    return Q


def square_function_ratios(handle: Calculus, points_per_decade: int = 40, drift_tol: float = 0.05) -> SquareFunctionReport:
    """Extreme values of ``int ||psi(t D0) f||^2 dt/t / ||f||^2`` over the core space."""

    def extremes(ppd: int) -> tuple[float, float]:
        Q = square_function_form(handle, ppd)
        ev = np.linalg.eigvalsh(0.5 * (Q + Q.conj().T))
        return float(ev[0]), float(ev[-1])

    lo, hi = extremes(points_per_decade)
    lo2, hi2 = extremes(2 * points_per_decade)
    drift = max(abs(lo2 - lo) / abs(lo2), abs(hi2 - hi) / abs(hi2))
    if drift > drift_tol:
        raise QuadratureDriftError(f"square-function ratio drifted by {drift:.3g} under grid doubling")
    return SquareFunctionReport(lo2, hi2, 2 * points_per_decade, float(drift))


def square_function_norm(handle: Calculus, f: BoundarySection, points_per_decade: int = 40) -> tuple[float, float]:
    """Return ``(int ||psi(t D0) f||^2 dt/t, ratio to ||f||^2)``."""
    ts, w = _log_grid(handle, points_per_decade)
    val = 0.0
    for t, wt in zip(ts, w):
        g = handle.matrix(psi_sf(t)) @ f.vector
        val += wt * 2 * np.pi * float(np.vdot(g, g).real)
    nf = f.norm() ** 2
    return float(val), float(val / nf) if nf > 0 else float("nan")


# ---------------------------------------------------------------------------
# Kato square root on the circle


@dataclass(frozen=True)
class KatoResult:
    sqrt_u: np.ndarray
    ratio: float
    operator: np.ndarray


def block_coefficient(h: np.ndarray, H: np.ndarray) -> CoefficientField:
    """``B0 = diag(h, H)`` for scalar Fourier series ``h`` and ``H`` (m = 1)."""
    h = np.asarray(h, dtype=complex)
    H = np.asarray(H, dtype=complex)
    Kc = max(h.size, H.size) // 2
    e = np.zeros((2, 2, 2 * Kc + 1), dtype=complex)
    e[0, 0, Kc - h.size // 2 : Kc + h.size // 2 + 1] = h
    e[1, 1, Kc - H.size // 2 : Kc + H.size // 2 + 1] = H
    return CoefficientField(1, Kc, e)


def kato_sqrt(h: np.ndarray, H: np.ndarray, u: np.ndarray) -> KatoResult:
    """``sqrt(h L) u`` for ``L = -d/dtheta H d/dtheta`` through ``sgn(B0 D)``.

    With ``B0 = diag(h, H)``, ``(sqrt(hL) u, 0) = sgn(B0 D)(0, H u')``.
    ``h``, ``H`` and ``u`` are scalar Fourier coefficient arrays; ``u`` fixes
    the truncation ``K``.  Returns the coefficients of ``sqrt(hL) u``, the
    ratio ``||sqrt(hL) u|| / ||u'||`` and the matrix of ``sqrt(hL)``.
    """
    B0 = block_coefficient(h, H)
    u = np.asarray(u, dtype=complex)
    n = u.size
    K = (n - 1) // 2
    calc = Calculus(B0, 0.0, K)
    dth = np.diag(1j * modes(K))
    lift = np.zeros((2 * n, n), dtype=complex)
    lift[n:] = calc.M[n:, n:] @ dth
    op = (calc.matrix(sgn(), tilde=True) @ lift)[:n]
    su = op @ u
    nd = np.linalg.norm(dth @ u)
    return KatoResult(su, float(np.linalg.norm(su) / nd) if nd > 0 else float("nan"), op)


def kato_dense_oracle(h: np.ndarray, H: np.ndarray, K: int) -> tuple[np.ndarray, np.ndarray]:
    """Compressions to mean-zero modes of ``hL`` and of its principal square root (scipy sqrtm)."""
    M = multiplication_matrix(block_coefficient(h, H), K)
    n = 2 * K + 1
    dth = np.diag(1j * modes(K))
    hL = M[:n, :n] @ (-dth @ M[n:, n:] @ dth)
    keep = modes(K) != 0
    T = hL[np.ix_(keep, keep)]
    return T, sqrtm(T)
