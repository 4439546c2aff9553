"""Dense matrices of the boundary operators acting on stacked Fourier coefficients.

All matrices act on ``BoundarySection.vector`` (component-major ordering).
The inner product carries a constant factor ``2 pi``, so adjoints are plain
conjugate transposes.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .coefficients import CoefficientField, multiplication_matrix
from .fields import BoundarySection, modes

TAGS = ("D", "N", "MULT", "D0", "D0_TILDE", "PROJECTION", "FUNCTION_OF_D0")


class IllConditionedError(ValueError):
    """Raised when a solve needed by an operator is numerically singular."""


@dataclass(frozen=True)
class OperatorMatrix:
    """A dense operator on sections with fixed ``(m, K)``."""

    entries: np.ndarray
    tag: str
    m: int
    K: int
    sigma: float | None = None

    def __post_init__(self) -> None:
        if self.tag not in TAGS:
            raise ValueError(f"unknown operator tag {self.tag!r}")
        dim = 2 * self.m * (2 * self.K + 1)
        e = np.array(self.entries, dtype=complex)
        if e.shape != (dim, dim):
            raise ValueError(f"operator shape {e.shape} does not match dimension {dim}")
        e.setflags(write=False)
        object.__setattr__(self, "entries", e)

    def __array__(self, dtype=None, copy=None):
        return self.entries if dtype is None else self.entries.astype(dtype)

    def apply(self, f: BoundarySection) -> BoundarySection:
        if (f.m, f.K) != (self.m, self.K):
            raise ValueError("section and operator shapes differ")
        return BoundarySection.from_vector(self.m, self.K, self.entries @ f.vector)

    def __matmul__(self, other):
        if isinstance(other, BoundarySection):
            return self.apply(other)
        return self.entries @ np.asarray(other)

    def adjoint(self) -> np.ndarray:
        return self.entries.conj().T


# ---------------------------------------------------------------------------
# index helpers


def mean_index(m: int, K: int) -> np.ndarray:
    """Flat indices of the k=0 coefficient of every component (the space of constants)."""
    return np.arange(2 * m) * (2 * K + 1) + K


def h_index(m: int, K: int) -> np.ndarray:
    """Flat indices of the mean-zero coordinates."""
    keep = np.ones(2 * m * (2 * K + 1), dtype=bool)
    keep[mean_index(m, K)] = False
    return np.flatnonzero(keep)


def normal_index(m: int, K: int) -> np.ndarray:
    return np.arange(m * (2 * K + 1))


def tangential_index(m: int, K: int) -> np.ndarray:
    n = m * (2 * K + 1)
    return np.arange(n, 2 * n)


# ---------------------------------------------------------------------------
# assembly (raw arrays)


def d_matrix(m: int, K: int) -> np.ndarray:
    """``D = [[0, -d/dtheta], [d/dtheta, 0]]`` with ``d/dtheta`` acting as ``ik`` on mode k."""
    n = m * (2 * K + 1)
    dtheta = np.kron(np.eye(m), np.diag(1j * modes(K)))
    out = np.zeros((2 * n, 2 * n), dtype=complex)
    out[:n, n:] = -dtheta
    out[n:, :n] = dtheta
    return out


def n_matrix(m: int, K: int) -> np.ndarray:
    n = m * (2 * K + 1)
    return np.diag(np.concatenate([-np.ones(n), np.ones(n)])).astype(complex)


def d_pseudoinverse(m: int, K: int) -> np.ndarray:
    """Inverse of ``D`` on mean-zero sections, extended by zero on constants."""
    ks = modes(K).astype(float)
    inv = np.zeros_like(ks, dtype=complex)
    nz = ks != 0
    inv[nz] = 1.0 / (1j * ks[nz])
    n = m * (2 * K + 1)
    dinv = np.kron(np.eye(m), np.diag(inv))
    out = np.zeros((2 * n, 2 * n), dtype=complex)
    # D^{-1} [[0, -d], [d, 0]] = [[0, d^{-1}], [-d^{-1}, 0]]
    out[:n, n:] = dinv
    out[n:, :n] = -dinv
    return out


def h_projector(m: int, K: int) -> np.ndarray:
    P = np.eye(2 * m * (2 * K + 1), dtype=complex)
    idx = mean_index(m, K)
    P[idx, idx] = 0.0
    return P


def mean_embedding(m: int, K: int) -> np.ndarray:
    """Columns are the constant sections ``e_c`` (one per component)."""
    dim = 2 * m * (2 * K + 1)
    E0 = np.zeros((dim, 2 * m), dtype=complex)
    E0[mean_index(m, K), np.arange(2 * m)] = 1.0
    return E0


# ---------------------------------------------------------------------------
# public operations


def assemble_D(m: int, K: int) -> OperatorMatrix:
    return OperatorMatrix(d_matrix(m, K), "D", m, K)


def assemble_N(m: int, K: int) -> OperatorMatrix:
    return OperatorMatrix(n_matrix(m, K), "N", m, K)


def assemble_mult(B: CoefficientField, K: int | None = None) -> OperatorMatrix:
    """Matrix of pointwise multiplication by ``B`` on sections truncated at ``K``."""
    K = B.K if K is None else K
    return OperatorMatrix(multiplication_matrix(B, K), "MULT", B.m, K)


def assemble_D0(B0: CoefficientField, sigma: float = 0.0, K: int | None = None) -> tuple[OperatorMatrix, OperatorMatrix]:
    """``D0 = D B0 + sigma N`` and ``D0_tilde = B0 D - sigma N``."""
    K = B0.K if K is None else K
    D = d_matrix(B0.m, K)
    N = n_matrix(B0.m, K)
    M = multiplication_matrix(B0, K)
    D0 = OperatorMatrix(D @ M + sigma * N, "D0", B0.m, K, sigma)
    D0t = OperatorMatrix(M @ D - sigma * N, "D0_TILDE", B0.m, K, sigma)
    return D0, D0t


@dataclass(frozen=True)
class HodgeProjections:
    """Projections of the two splittings ``H + B0^{-1} H^perp`` and ``B0 H + H^perp``.

    ``P1`` projects onto ``H`` along ``B0^{-1} H^perp`` and ``P0 = I - P1``;
    ``P1_tilde`` projects onto ``B0 H`` along ``H^perp`` and ``P0_tilde = I - P1_tilde``.
    """

    P1: np.ndarray
    P0: np.ndarray
    P1_tilde: np.ndarray
    P0_tilde: np.ndarray
    condition: float


def hodge_projections(
    B0: CoefficientField, sigma: float = 0.0, K: int | None = None, max_condition: float = 1e12
) -> HodgeProjections:
    """Compute the Hodge projections of ``M = M_{B0}``.

    With ``E`` the constant sections and ``e^t`` the mean functional,
    ``P0 = M^{-1} E (e^t M^{-1} E)^{-1} e^t`` and
    ``P0_tilde = E (e^t M^{-1} E)^{-1} e^t M^{-1}``.  The small matrix
    ``e^t M^{-1} E`` is (2 pi times) the inverse of the harmonic mean of B0.
    The splittings do not depend on ``sigma``.
    """
    K = B0.K if K is None else K
    M = multiplication_matrix(B0, K)
    condM = np.linalg.cond(M)
    if not np.isfinite(condM) or condM > max_condition:
        raise IllConditionedError(f"multiplication operator is ill-conditioned (cond={condM:.3g})")
    E0 = mean_embedding(B0.m, K)
    R0 = np.linalg.solve(M, E0)
    L0 = np.linalg.solve(M.T, E0).T  # e^t M^{-1}
    G = E0.T @ R0
    condG = np.linalg.cond(G)
    if not np.isfinite(condG) or condG > max_condition:
        raise IllConditionedError(f"mean of B0^-1 is ill-conditioned (cond={condG:.3g})")
    Gi = np.linalg.inv(G)
    P0 = R0 @ Gi @ E0.T
    P0t = E0 @ Gi @ L0
    eye = np.eye(M.shape[0])
    return HodgeProjections(eye - P0, P0, eye - P0t, P0t, float(max(condM, condG)))


def harmonic_mean_projection(B0: CoefficientField, g: BoundarySection, tol: float = 1e-15) -> np.ndarray:
    """``(int B0^{-1})^{-1} int B0^{-1} g`` using the pointwise inverse of ``B0``.

    Returns the constant vector in C^{2m}.
    """
    from .coefficients import pointwise_inverse

    Binv = pointwise_inverse(B0, K_out=max(B0.K, g.K), tol=tol)
    mean_inv = Binv.entries[:, :, Binv.K]
    # int B^{-1} g / 2pi = sum_k Binv(-k) g(k)
    Kc = min(Binv.K, g.K)
    ks = np.arange(-Kc, Kc + 1)
    prod = np.einsum("ijk,jk->i", Binv.entries[:, :, Binv.K - ks], g.coeffs[:, g.K + ks])
    return np.linalg.solve(mean_inv, prod)


def h_to_tilde(h: BoundarySection, B0: CoefficientField, sigma: float = 0.0, tol: float = 1e-10) -> BoundarySection:
    """The mean-zero ``h~`` with ``P_H h~ = P_H B0 h + sigma D^{-1} N h``.

    Then ``D0 h = D h~`` for every mean-zero ``h``.
    """
    if np.max(np.abs(h.mean)) > tol * max(1.0, np.max(np.abs(h.coeffs))):
        raise ValueError("h must be mean-zero")
    m, K = h.m, h.K
    M = multiplication_matrix(B0, K)
    v = h_projector(m, K) @ (M @ h.vector) + sigma * (d_pseudoinverse(m, K) @ (n_matrix(m, K) @ h.vector))
    return BoundarySection.from_vector(m, K, v)


# ---------------------------------------------------------------------------
# spectra and resolvents


def _restricted(D0: OperatorMatrix) -> np.ndarray:
    """``D0`` on ``H`` when ``sigma = 0`` (where it is not injective), else on all of L2."""
    A = D0.entries
    if not D0.sigma:
        idx = h_index(D0.m, D0.K)
        return A[np.ix_(idx, idx)]
    return A


def fitted_angle(eigs: np.ndarray, sigma: float = 0.0) -> float:
    """Smallest ``omega`` with ``tan(omega)^2 x^2 >= y^2 + sigma^2`` for all eigenvalues."""
    x = np.abs(eigs.real)
    y = np.sqrt(eigs.imag**2 + sigma**2)
    with np.errstate(divide="ignore"):
        ang = np.arctan2(y, x)
    return float(np.max(ang)) if ang.size else 0.0


@dataclass(frozen=True)
class SpectrumReport:
    eigenvalues: np.ndarray
    omega: float
    violations: int
    min_abs_real: float


def spectrum(D0: OperatorMatrix, omega: float | None = None) -> SpectrumReport:
    """Eigenvalues of ``D0`` (on ``H`` when ``sigma = 0``) and a double-hyperbola check.

    ``omega`` defaults to the fitted angle, in which case there are no
    violations by construction; pass a fixed angle to count violators.
    """
    sigma = D0.sigma or 0.0
    eigs = np.linalg.eigvals(_restricted(D0))
    eigs = eigs[np.lexsort((eigs.imag, eigs.real))]
    om = fitted_angle(eigs, sigma) if omega is None else omega
    lhs = np.tan(om) ** 2 * eigs.real**2
    rhs = eigs.imag**2 + sigma**2
    viol = int(np.sum(lhs < rhs * (1 - 1e-10) - 1e-12))
    return SpectrumReport(eigs, om, viol, float(np.min(np.abs(eigs.real))))


@dataclass(frozen=True)
class ResolventReport:
    lam: complex
    matrix: np.ndarray
    norm: float
    omega: float
    bound: float

    @property
    def within_bound(self) -> bool:
        return self.norm <= self.bound * (1 + 1e-9)


def resolvent(D0: OperatorMatrix, lam: complex, omega: float | None = None, tol: float = 1e-10) -> ResolventReport:
    """Solve ``(lam - D0) X = I`` on ``H`` (sigma = 0) or on L2 (sigma != 0).

    ``bound`` is ``1 / (sqrt(y^2 + sigma^2)/tan(omega) - |x|)`` for
    ``lam = x + iy`` outside the region of the (fitted) angle, else inf.
    """
    sigma = D0.sigma or 0.0
    A = _restricted(D0)
    eigs = np.linalg.eigvals(A)
    scale = max(1.0, float(np.max(np.abs(eigs))))
    if np.min(np.abs(eigs - lam)) < tol * scale:
        raise IllConditionedError(f"lambda={lam} lies within tolerance of the spectrum")
    X = np.linalg.solve(lam * np.eye(A.shape[0]) - A, np.eye(A.shape[0]))
    om = fitted_angle(eigs, sigma) if omega is None else omega
    gap = np.sqrt(lam.imag**2 + sigma**2) / np.tan(om) - abs(lam.real) if om > 0 else np.inf
    bound = 1.0 / gap if gap > 0 else np.inf
    return ResolventReport(complex(lam), X, float(np.linalg.norm(X, 2)), om, float(bound))


def resolvent_constant(D0: OperatorMatrix, ys: np.ndarray) -> float:
    """``sup_y ||(iy - D0)^{-1}|| sqrt(y^2 + sigma^2)`` over the given nonzero ``ys``."""
    sigma = D0.sigma or 0.0
    A = _restricted(D0)
    eye = np.eye(A.shape[0])
    best = 0.0
    for y in np.asarray(ys, dtype=float):
        X = np.linalg.solve(1j * y * eye - A, eye)
        best = max(best, float(np.linalg.norm(X, 2) * np.sqrt(y * y + sigma * sigma)))
    return best
