"""Integral equations for conormal gradients and the boundary value problems built on them.

Time ``t = ln(1/r)`` is discretized by a :class:`~conormal.timegrid.TimeGrid`.
Unknown trajectories are cell averages (a Galerkin method with piecewise
constant trial and test functions).  The kernel ``exp(-|t-s| Lambda)`` is
integrated exactly over pairs of cells in the modal basis of ``D0``:

    cells j < i:  exp(-(a_i - b_j) mu) phi1(h_i mu) phi1(h_j mu) / h_i
    cells j = i:  phi2(h_i mu) / h_i
    cells j > i:  exp(-(a_j - b_i) mu) phi1(h_i mu) phi1(h_j mu) / h_i

with ``phi1(h mu) = (1 - e^{-h mu}) / mu`` and ``phi2(h mu) = (e^{-h mu} - 1 + h mu) / mu^2``,
where ``mu = |lambda|`` and the sign picks the positive or negative Hardy part.
Because the discretization is symmetric the discrete ``S_A`` and ``S_{A*}``
are exact adjoints, so duality identities hold to round-off.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Literal

import numpy as np
import scipy.linalg as sla
from scipy.sparse.linalg import ArpackNoConvergence, eigs

from .calculus import Calculus, Modal, chi_plus, exp_abs
from .coefficients import CoefficientField, Discrepancy, hat_transform, multiplication_matrix
from .fields import BoundarySection, PolarGridFunction, angles, synthesize_array
from .operators import (
    d_pseudoinverse,
    h_index,
    mean_index,
    normal_index,
    tangential_index,
)
from .timegrid import TimeGrid

DECAY_TOL = 1e-12
T_MAX_CAP = 60.0

Kind = Literal["CONORMAL_F", "POTENTIAL_V"]


class IllPosedError(ValueError):
    """A boundary map is rank deficient."""


class NonconvergenceError(ValueError):
    """The fixed-point iteration failed and no dense fallback was allowed."""


# ---------------------------------------------------------------------------
# scalar kernels


def _series(z: np.ndarray, k: int, terms: int = 18) -> np.ndarray:
    """``sum_n (-z)^n / (n+k)!`` (the entire function ``phi_k(-z)``)."""
    out = np.zeros_like(z)
    fact = float(np.prod(np.arange(1, k + 1)))
    term = np.ones_like(z) / fact
    for n in range(terms):
        out = out + term
        term = term * (-z) / (n + k + 1)
    return out


def phi1_int(h: np.ndarray, mu: np.ndarray) -> np.ndarray:
    """``int_0^h exp(-x mu) dx``."""
    h, mu = np.broadcast_arrays(np.asarray(h, dtype=complex), np.asarray(mu, dtype=complex))
    z = h * mu
    out = np.empty_like(z)
    small = np.abs(z) < 0.5
    out[small] = h[small] * _series(z[small], 1)
    big = ~small
    out[big] = -np.expm1(-z[big]) / mu[big]
    return out


def phi2_int(h: np.ndarray, mu: np.ndarray) -> np.ndarray:
    """``int_0^h int_0^x exp(-y mu) dy dx``."""
    h, mu = np.broadcast_arrays(np.asarray(h, dtype=complex), np.asarray(mu, dtype=complex))
    z = h * mu
    out = np.empty_like(z)
    small = np.abs(z) < 0.5
    out[small] = h[small] ** 2 * _series(z[small], 2)
    big = ~small
    out[big] = (np.expm1(-z[big]) + z[big]) / mu[big] ** 2
    return out


def default_t_max(calc: Calculus, decay_tol: float = DECAY_TOL, cap: float = T_MAX_CAP) -> float:
    """``T`` with ``exp(-T min Re|lambda|) < decay_tol``."""
    lam = calc.eigenvalues
    lam = lam[np.abs(lam) > 1e-12]
    gap = float(np.min(np.abs(lam.real))) if lam.size else 1.0
    return float(min(np.log(1.0 / decay_tol) / gap, cap))


def default_grid(calc: Calculus, **kw) -> TimeGrid:
    kw.setdefault("t_max", default_t_max(calc))
    return TimeGrid.geometric(**kw)


# ---------------------------------------------------------------------------
# trajectories


@dataclass(frozen=True)
class Trajectory:
    """Sections on the cells of a time grid.

    ``values[j]`` is the flat coefficient vector on cell ``j``; ``sampling``
    says whether it is the cell average or the point value at the midpoint.
    """

    grid: TimeGrid
    values: np.ndarray
    m: int
    K: int
    kind: Kind = "CONORMAL_F"
    sampling: Literal["average", "point"] = "average"

    def __post_init__(self) -> None:
        v = np.array(self.values, dtype=complex)
        if v.shape != (self.grid.n, 2 * self.m * (2 * self.K + 1)):
            raise ValueError(f"trajectory values shape {v.shape} inconsistent with grid and (m, K)")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    def section(self, j: int) -> BoundarySection:
        return BoundarySection.from_vector(self.m, self.K, self.values[j])

    def norms(self) -> np.ndarray:
        """``||f_j||_2`` on each cell (with the 2 pi measure)."""
        return np.sqrt(2 * np.pi * np.sum(np.abs(self.values) ** 2, axis=1))

    def mean_leak(self) -> float:
        """Largest relative size of a k = 0 coefficient (zero for H-valued trajectories)."""
        idx = mean_index(self.m, self.K)
        scale = max(float(np.max(np.abs(self.values))), 1e-300)
        return float(np.max(np.abs(self.values[:, idx])) / scale)


def semigroup_trajectory(
    h_plus: BoundarySection,
    handle: Calculus,
    grid: TimeGrid,
    sampling: Literal["average", "point"] = "point",
    tol: float = 1e-9,
) -> Trajectory:
    """``f_t = exp(-t Lambda) h+`` on the grid (midpoint values or cell averages)."""
    Ep = handle.matrix(chi_plus())
    h = h_plus.vector
    if np.linalg.norm(Ep @ h - h) > tol * max(np.linalg.norm(h), 1e-300):
        raise ValueError("h_plus is not in the positive Hardy subspace")
    modal = _require_modal(handle)
    Wh = modal.W @ h
    mu = modal.side * modal.lam
    if sampling == "point":
        coef = np.exp(-grid.mids[:, None] * mu[None, :])
    else:
        coef = np.exp(-grid.left[:, None] * mu[None, :]) * phi1_int(grid.widths[:, None], mu[None, :]) / grid.widths[:, None]
    vals = (coef * Wh[None, :]) @ modal.V.T
    return Trajectory(grid, vals, handle.m, handle.K, "CONORMAL_F", sampling)


def _require_modal(handle: Calculus, tilde: bool = False) -> Modal:
    modal = handle.modal(tilde)
    if modal is None:
        raise np.linalg.LinAlgError(
            f"eigenvector condition {handle.eig_condition:.3g} too large for the modal solver"
        )
    return modal


# ---------------------------------------------------------------------------
# the integral operators


@dataclass
class SolveReport:
    method: str
    iterations: int
    spectral_radius: float
    residual: float
    status: str


class IntegralOperator:
    """Discrete ``S_A`` (and ``S~_A``) for a discrepancy on its time grid.

    Only cells where the discrepancy is nonzero enter as unknowns; values
    on the remaining cells are recovered by applying the kernel.
    """

    def __init__(self, handle: Calculus, E: Discrepancy):
        if (E.m, E.K) != (handle.m, handle.K):
            E = _retruncate(E, handle.K)
        self.calc = handle
        self.E = E
        self.grid = E.grid
        self.m, self.K, self.dim = handle.m, handle.K, handle.dim
        self.support = E.support
        self.ns = self.support.size
        self.modal = _require_modal(handle)
        self.modal_t = _require_modal(handle, tilde=True)
        self.mu = self.modal.side * self.modal.lam
        self.mu_t = self.modal_t.side * self.modal_t.lam
        self.cell_mult = np.array([multiplication_matrix(E.cell(j), self.K) for j in self.support])
        if self.ns:
            self.W = self.modal.W[None] @ (handle.D[None] @ self.cell_mult)
            self.Wt = self.modal_t.W[None] @ self.cell_mult
        else:
            self.W = np.zeros((0, self.mu.size, self.dim), dtype=complex)
            self.Wt = np.zeros((0, self.mu_t.size, self.dim), dtype=complex)
        self._dense: np.ndarray | None = None
        self._lu = None

    # kernel coefficients -------------------------------------------------
    def _avg_coeffs(self, rows: np.ndarray, mu: np.ndarray, side: np.ndarray) -> np.ndarray:
        """Coefficients ``(len(rows), ns, r)`` of cell-averaged outputs."""
        g = self.grid
        a, b, h = g.left, g.right, g.widths
        cols = self.support
        pos = (side > 0)[None, None, :]
        neg = ~pos
        ai, bi, hi = a[rows][:, None, None], b[rows][:, None, None], h[rows][:, None, None]
        aj, bj, hj = a[cols][None, :, None], b[cols][None, :, None], h[cols][None, :, None]
        m = mu[None, None, :]
        below = (cols[None, :] < rows[:, None])[..., None]
        above = (cols[None, :] > rows[:, None])[..., None]
        same = ~below & ~above
        p1 = phi1_int(hi, m) * phi1_int(hj, m) / hi
        with np.errstate(over="ignore", invalid="ignore"):
            low = np.where(below & pos, np.exp(-np.where(below, ai - bj, 0.0) * m) * p1, 0.0)
            high = np.where(above & neg, -np.exp(-np.where(above, aj - bi, 0.0) * m) * p1, 0.0)
        diag = np.where(same, np.where(pos, 1.0, -1.0) * phi2_int(hi, m) / hi, 0.0)
        return low + high + diag

    def _point_coeffs(self, ts: np.ndarray, mu: np.ndarray, side: np.ndarray) -> np.ndarray:
        """Coefficients ``(len(ts), ns, r)`` for point values at times ``ts``."""
        g = self.grid
        cols = self.support
        a, b, h = g.left[cols][None, :, None], g.right[cols][None, :, None], g.widths[cols][None, :, None]
        t = np.asarray(ts, dtype=float)[:, None, None]
        m = mu[None, None, :]
        pos = (side > 0)[None, None, :]
        neg = ~pos
        done = b <= t
        ahead = a >= t
        inside = ~done & ~ahead
        with np.errstate(over="ignore", invalid="ignore"):
            c_done = np.where(done & pos, np.exp(-np.where(done, t - b, 0.0) * m) * phi1_int(h, m), 0.0)
            c_ahead = np.where(ahead & neg, -np.exp(-np.where(ahead, a - t, 0.0) * m) * phi1_int(h, m), 0.0)
            left = np.where(inside, t - a, 0.0)
            right = np.where(inside, b - t, 0.0)
            c_in = np.where(inside, np.where(pos, phi1_int(left, m), -phi1_int(right, m)), 0.0)
        return c_done + c_ahead + c_in

    # application ----------------------------------------------------------
    def _project(self, f_support: np.ndarray, tilde: bool) -> np.ndarray:
        """``P[j] = W_j f_j``, shape ``(ns, r)`` or ``(ns, r, batch)``."""
        W = self.Wt if tilde else self.W
        return W @ f_support if f_support.ndim == 3 else np.einsum("jrd,jd->jr", W, f_support)

    def apply_cells(self, f_support: np.ndarray, rows: np.ndarray | None = None, tilde: bool = False) -> np.ndarray:
        """Cell averages of ``S f`` (or ``S~ f``) on ``rows`` (default: the support)."""
        rows = self.support if rows is None else np.asarray(rows)
        modal, mu = (self.modal_t, self.mu_t) if tilde else (self.modal, self.mu)
        if self.ns == 0:
            shape = (rows.size, self.dim) + f_support.shape[2:]
            return np.zeros(shape, dtype=complex)
        C = self._avg_coeffs(rows, mu, modal.side)
        P = self._project(f_support, tilde)
        if P.ndim == 2:
            return np.einsum("ijr,jr->ir", C, P) @ modal.V.T
        return np.einsum("dr,ijr,jrb->idb", modal.V, C, P)

    def apply_points(self, f_support: np.ndarray, ts: np.ndarray, tilde: bool = False) -> np.ndarray:
        """Point values of ``S f`` (or ``S~ f``) at times ``ts``."""
        ts = np.atleast_1d(np.asarray(ts, dtype=float))
        modal, mu = (self.modal_t, self.mu_t) if tilde else (self.modal, self.mu)
        if self.ns == 0:
            return np.zeros((ts.size, self.dim) + f_support.shape[2:], dtype=complex)
        C = self._point_coeffs(ts, mu, modal.side)
        P = self._project(f_support, tilde)
        if P.ndim == 2:
            return np.einsum("ijr,jr->ir", C, P) @ modal.V.T
        return np.einsum("dr,ijr,jrb->idb", modal.V, C, P)

    def dense(self) -> np.ndarray:
        """The matrix of ``S`` on the stacked support-cell averages."""
        if self._dense is None:
            n, d = self.ns, self.dim
            S = np.zeros((n * d, n * d), dtype=complex)
            if n:
                C = self._avg_coeffs(self.support, self.mu, self.modal.side)
                V = self.modal.V
                for i in range(n):
                    blocks = V[None] @ (C[i][:, :, None] * self.W)
                    S[i * d : (i + 1) * d] = np.transpose(blocks, (1, 0, 2)).reshape(d, n * d)
            self._dense = S
        return self._dense

    def spectral_radius(self) -> float:
        S = self.dense()
        if S.shape[0] == 0:
            return 0.0
        if S.shape[0] <= 600:
            return float(np.max(np.abs(np.linalg.eigvals(S))))
        try:
            vals = eigs(S, k=1, which="LM", return_eigenvectors=False, tol=1e-8, maxiter=5000)
            return float(np.max(np.abs(vals)))
        except ArpackNoConvergence:
            return float(np.max(np.abs(np.linalg.eigvals(S))))

    def lu(self):
        if self._lu is None:
            S = self.dense()
            self._lu = sla.lu_factor(np.eye(S.shape[0]) - S)
        return self._lu

    # initial data ---------------------------------------------------------
    def semigroup_cells(self, h: np.ndarray, rows: np.ndarray | None = None, tilde: bool = False) -> np.ndarray:
        """Cell averages of ``exp(-t Lambda) h`` (or ``exp(-t Lambda~) h``) on ``rows``."""
        rows = self.support if rows is None else np.asarray(rows)
        modal, mu = (self.modal_t, self.mu_t) if tilde else (self.modal, self.mu)
        g = self.grid
        a, hh = g.left[rows][:, None], g.widths[rows][:, None]
        coef = np.exp(-a * mu[None, :]) * phi1_int(hh, mu[None, :]) / hh
        Wh = modal.W @ h
        if Wh.ndim == 1:
            return (coef * Wh[None, :]) @ modal.V.T
        return np.einsum("dr,ir,rb->idb", modal.V, coef, Wh)

    def semigroup_points(self, h: np.ndarray, ts: np.ndarray, tilde: bool = False) -> np.ndarray:
        modal, mu = (self.modal_t, self.mu_t) if tilde else (self.modal, self.mu)
        ts = np.atleast_1d(np.asarray(ts, dtype=float))
        coef = np.exp(-ts[:, None] * mu[None, :])
        Wh = modal.W @ h
        if Wh.ndim == 1:
            return (coef * Wh[None, :]) @ modal.V.T
        return np.einsum("dr,ir,rb->idb", modal.V, coef, Wh)

    # solves ---------------------------------------------------------------
    def solve(
        self,
        F0: np.ndarray,
        method: Literal["auto", "iterate", "dense"] = "auto",
        tol: float = 1e-10,
        max_iter: int = 500,
    ) -> tuple[np.ndarray, SolveReport]:
        """Solve ``f = F0 + S f`` on the support cells.

        ``F0`` has shape ``(ns, dim)`` or ``(ns, dim, batch)``.  ``auto``
        iterates when the spectral radius is below 1 and falls back to the
        dense LU solve otherwise.
        """
        n, d = self.ns, self.dim
        if n == 0:
            return F0.copy(), SolveReport("none", 0, 0.0, 0.0, "iteratively invertible")
        flat = F0.reshape(n * d, -1)
        S = self.dense()
        rho = self.spectral_radius()
        iters = 0
        used = method
        if method in ("auto", "iterate"):
            x = flat.copy()
            converged = False
            for iters in range(1, max_iter + 1):
                x_new = flat + S @ x
                delta = np.linalg.norm(x_new - x) / max(np.linalg.norm(x_new), 1e-300)
                x = x_new
                if delta < tol:
                    converged = True
                    break
            if converged:
                used = "iterate"
            elif method == "iterate":
                raise NonconvergenceError(f"fixed-point iteration did not converge (rho(S)={rho:.3g})")
            else:
                used = "dense"
        if used == "dense":
            x = sla.lu_solve(self.lu(), flat)
        res = np.linalg.norm(x - flat - S @ x) / max(np.linalg.norm(x), 1e-300)
        if rho < 1 and used == "iterate":
            status = "iteratively invertible"
        elif np.isfinite(res) and res < 1e-6:
            status = "densely invertible"
        else:
            status = "singular"
        return x.reshape(F0.shape), SolveReport(used, iters, rho, float(res), status)


def _retruncate(E: Discrepancy, K: int) -> Discrepancy:
    base = E.base.truncate(K)
    cells = np.array([E.cell(j).truncate(K).entries for j in range(E.grid.n)])
    return Discrepancy(base, E.grid, cells)


# ---------------------------------------------------------------------------
# trajectory-level operations


def _support_values(f: Trajectory, op: IntegralOperator) -> np.ndarray:
    if f.sampling != "average":
        raise ValueError("the integral operators act on cell-averaged trajectories")
    if f.grid.n != op.grid.n or not np.allclose(f.grid.edges, op.grid.edges):
        raise ValueError("trajectory and discrepancy live on different time grids")
    return f.values[op.support]


def apply_SA(E: Discrepancy, f: Trajectory, handle: Calculus) -> Trajectory:
    """Cell averages of ``S_A f`` on every cell of the grid."""
    op = IntegralOperator(handle, E)
    vals = op.apply_cells(_support_values(f, op), rows=np.arange(op.grid.n))
    return Trajectory(op.grid, vals, handle.m, handle.K, "CONORMAL_F")


def apply_tilde_SA(E: Discrepancy, f: Trajectory, handle: Calculus) -> Trajectory:
    """Cell averages of ``S~_A f``; ``D S~_A f = S_A f``."""
    op = IntegralOperator(handle, E)
    vals = op.apply_cells(_support_values(f, op), rows=np.arange(op.grid.n), tilde=True)
    return Trajectory(op.grid, vals, handle.m, handle.K, "POTENTIAL_V")


def sa_decomposition_residual(handle: Calculus) -> float:
    """``max_pm ||E0+- D - (D0 E^0+- - sigma E_check^0+-)||``.

    Here ``E^0 = E0 B0^{-1} P1~`` and ``E_check^0 = E0 N B0^{-1} P1~``.
    """
    Ep, Em, _, _ = handle.hardy()
    P = handle.Minv @ handle.hodge.P1_tilde
    out = 0.0
    for E in (Ep, Em):
        hat = E @ P
        check = E @ handle.N @ P
        out = max(out, float(np.linalg.norm(E @ handle.D - (handle.D0 @ hat - handle.sigma * check), 2)))
    return out


def solve_conormal(
    h_plus: BoundarySection,
    E: Discrepancy,
    handle: Calculus,
    method: Literal["auto", "iterate", "dense"] = "auto",
) -> tuple[Trajectory, SolveReport]:
    """Solve ``f = exp(-t Lambda) h+ + S_A f`` and return cell averages on the whole grid."""
    op = IntegralOperator(handle, E)
    rows = np.arange(op.grid.n)
    F0 = op.semigroup_cells(h_plus.vector)
    fs, rep = op.solve(F0, method)
    vals = op.semigroup_cells(h_plus.vector, rows) + op.apply_cells(fs, rows)
    return Trajectory(op.grid, vals, handle.m, handle.K, "CONORMAL_F"), rep


# ---------------------------------------------------------------------------
# perturbed Hardy projections


class HardySystem:
    """Perturbed Hardy projections ``E_A^+`` and ``E~_A^+`` for one discrepancy."""

    def __init__(self, handle: Calculus, E: Discrepancy, method: str = "dense"):
        self.calc = handle
        self.op = IntegralOperator(handle, E)
        self.method = method
        self.Ep, self.Em, self.Etp, self.Etm = handle.hardy()
        self.last_report: SolveReport | None = None

    def conormal_from(self, H: np.ndarray) -> np.ndarray:
        """Support-cell solutions ``f`` for initial data ``exp(-t Lambda) E0+ h`` (columns of ``H``)."""
        F0 = self.op.semigroup_cells(self.Ep @ H)
        fs, self.last_report = self.op.solve(F0, self.method)
        return fs

    def conormal_from_tilde(self, Ht: np.ndarray) -> np.ndarray:
        """Support-cell solutions for initial data ``D exp(-t Lambda~) E0~+ h~``."""
        V0 = self.op.semigroup_cells(self.Etp @ Ht, tilde=True)
        F0 = np.einsum("de,ieb->idb", self.calc.D, V0) if V0.ndim == 3 else V0 @ self.calc.D.T
        fs, self.last_report = self.op.solve(F0, self.method)
        return fs

    def plus(self, H: np.ndarray) -> np.ndarray:
        """``E_A^+ h`` for the columns of ``H`` (or a single vector)."""
        single = H.ndim == 1
        H2 = H[:, None] if single else H
        fs = self.conormal_from(H2)
        out = self.Ep @ H2 + self.op.apply_points(fs, np.array([0.0]))[0]
        return out[:, 0] if single else out

    def plus_tilde(self, Ht: np.ndarray) -> np.ndarray:
        """``E~_A^+ h~`` for the columns of ``Ht`` (or a single vector)."""
        single = Ht.ndim == 1
        H2 = Ht[:, None] if single else Ht
        fs = self.conormal_from_tilde(H2)
        out = self.Etp @ H2 + self.op.apply_points(fs, np.array([0.0]), tilde=True)[0]
        return out[:, 0] if single else out

    def matrix(self, tilde: bool = False) -> np.ndarray:
        eye = np.eye(self.calc.dim, dtype=complex)
        return self.plus_tilde(eye) if tilde else self.plus(eye)


def perturbed_hardy(h: BoundarySection, E: Discrepancy, handle: Calculus, tilde: bool = False) -> BoundarySection:
    """``E_A^+ h`` (or ``E~_A^+ h`` with ``tilde``)."""
    hs = HardySystem(handle, E)
    vec = hs.plus_tilde(h.vector) if tilde else hs.plus(h.vector)
    return BoundarySection.from_vector(h.m, h.K, vec)


def duality_residual(E: Discrepancy, sigma: float = 0.0) -> float:
    """``||(E_A^-)^* - N E~_{A*}^+ N||`` with the adjoint discrepancy built independently."""
    calc = Calculus(E.base, sigma)
    Ea = HardySystem(calc, E).matrix()
    Em = np.eye(calc.dim) - Ea
    Ead = E.adjoint()
    calc_adj = Calculus(Ead.base, sigma)
    Et = HardySystem(calc_adj, Ead).matrix(tilde=True)
    N = calc.N
    return float(np.linalg.norm(Em.conj().T - N @ Et @ N, 2))


# ---------------------------------------------------------------------------
# well-posedness maps


Problem = Literal["dirichlet", "neumann", "regularity"]


def _range_basis(P: np.ndarray, rel_tol: float = 1e-8) -> np.ndarray:
    U, s, _ = np.linalg.svd(P)
    r = int(np.sum(s > rel_tol * s[0]))
    return U[:, :r]


@dataclass
class WellPosednessMap:
    """Finite matrix of a boundary map on a basis of its domain."""

    problem: str
    matrix: np.ndarray
    basis: np.ndarray
    rows: np.ndarray
    condition: float
    rank: int
    hardy: HardySystem = field(repr=False)

    def solve(self, datum: np.ndarray) -> np.ndarray:
        """Coefficients of the domain element mapped to ``datum`` (restricted to ``rows``)."""
        if self.rank < self.matrix.shape[1]:
            raise IllPosedError(f"{self.problem} map is rank deficient (rank {self.rank} < {self.matrix.shape[1]})")
        return self.basis @ np.linalg.solve(self.matrix, datum)


def _setup(A: CoefficientField | Discrepancy, K: int | None, sigma: float, grid: TimeGrid | None):
    if isinstance(A, Discrepancy):
        E = A if K is None or K == A.K else _retruncate(A, K)
        calc = Calculus(E.base, sigma)
        return calc, E
    K = A.K if K is None else K
    B0 = hat_transform(A, K)
    calc = Calculus(B0, sigma)
    grid = grid or default_grid(calc)
    return calc, Discrepancy.zero(B0, grid)


def wellposedness_map(
    problem: Problem,
    A: CoefficientField | Discrepancy,
    K: int | None = None,
    sigma: float = 0.0,
    grid: TimeGrid | None = None,
    rank_tol: float = 1e-10,
) -> WellPosednessMap:
    """Assemble the Neumann, regularity or Dirichlet boundary map.

    ``A`` is either r-independent coefficients (the discrepancy is then
    zero) or a :class:`Discrepancy` carrying ``B0 = hat(A_1)``.
    """
    calc, E = _setup(A, K, sigma, grid)
    hs = HardySystem(calc, E)
    m, Kc = calc.m, calc.K
    if problem == "dirichlet":
        basis = _range_basis(hs.Etp)
        rows = normal_index(m, Kc)
        image = hs.plus_tilde(basis)
    elif problem in ("neumann", "regularity"):
        idx = h_index(m, Kc)
        basis = _range_basis(hs.Ep[:, idx])
        comp = normal_index(m, Kc) if problem == "neumann" else tangential_index(m, Kc)
        rows = np.intersect1d(comp, idx)
        image = hs.plus(basis)
    else:
        raise ValueError(f"unknown problem {problem!r}")
    T = image[rows]
    s = np.linalg.svd(T, compute_uv=False)
    rank = int(np.sum(s > rank_tol * s[0])) if s.size else 0
    cond = float(s[0] / s[-1]) if s.size and s[-1] > 0 else float("inf")
    return WellPosednessMap(problem, T, basis, rows, cond, rank, hs)


# ---------------------------------------------------------------------------
# boundary value problems


@dataclass
class BVPSolution:
    """Samples of a solution on a polar grid plus its boundary traces."""

    problem: str
    u: PolarGridFunction
    grad: PolarGridFunction
    conjugate: PolarGridFunction
    trace_u1: BoundarySection
    trace_g1: BoundarySection
    diagnostics: dict
    h_plus: np.ndarray = field(repr=False)
    h_tilde_plus: np.ndarray = field(repr=False)
    f_support: np.ndarray = field(repr=False)
    hardy: HardySystem = field(repr=False)

    def potential(self, ts: np.ndarray) -> np.ndarray:
        """``v_t`` at the given times (rows are flat section vectors)."""
        op = self.hardy.op
        return op.semigroup_points(self.h_tilde_plus, ts, tilde=True) + op.apply_points(self.f_support, ts, tilde=True)

    def conormal(self, ts: np.ndarray) -> np.ndarray:
        """``f_t`` at the given times."""
        op = self.hardy.op
        return op.semigroup_points(self.h_plus, ts) + op.apply_points(self.f_support, ts)


DEFAULT_RADII = np.exp(-np.linspace(3.0, 0.0, 31))


def _sample(
    problem: str,
    hs: HardySystem,
    h_plus: np.ndarray,
    ht_plus: np.ndarray,
    fs: np.ndarray,
    radii: np.ndarray,
    n_theta: int,
    report: SolveReport | None,
    extra: dict,
) -> BVPSolution:
    calc, op = hs.calc, hs.op
    m, K = calc.m, calc.K
    radii = np.asarray(radii, dtype=float)
    ts = -np.log(radii)
    sol = BVPSolution(problem, None, None, None, None, None, {}, h_plus, ht_plus, fs, hs)  # type: ignore[arg-type]
    v = sol.potential(ts)
    f = sol.conormal(ts)
    # B_t f_t with the discrepancy of the cell containing t (zero past the grid)
    cells = op.grid.locate(ts)
    beyond = ts > op.grid.t_max
    Bf = f @ calc.M.T
    pos = {c: i for i, c in enumerate(op.support)}
    for i, c in enumerate(cells):
        if not beyond[i] and c in pos:
            Bf[i] -= op.cell_mult[pos[c]] @ f[i]
    thetas = angles(n_theta)
    n = 2 * K + 1

    def comps(vecs: np.ndarray, first: int) -> np.ndarray:
        return np.array([synthesize_array(vecs[:, c * n : (c + 1) * n], n_theta) for c in range(first, first + m)])

    u_vals = comps(v, 0)
    conj_vals = comps(v, m)
    g_norm = comps(Bf, 0)
    g_tan = comps(f, m)
    grad_vals = np.concatenate([g_norm, g_tan]) / radii[None, :, None]
    v0 = sol.potential(np.array([0.0]))[0]
    f0 = sol.conormal(np.array([0.0]))[0]
    Bf0 = calc.M @ f0
    c0 = int(op.grid.locate(np.array([0.0]))[0])
    if c0 in pos:
        Bf0 -= op.cell_mult[pos[c0]] @ f0
    g1 = np.concatenate([Bf0[: m * n], f0[m * n :]])
    u1 = v0.copy()
    u1[m * n :] = 0.0
    diag = {
        "solve": None if report is None else report.__dict__,
        "f0_mean_leak": float(np.max(np.abs(f0[mean_index(m, K)]))),
        **extra,
    }
    sol.u = PolarGridFunction(radii, thetas, u_vals)
    sol.conjugate = PolarGridFunction(radii, thetas, conj_vals)
    sol.grad = PolarGridFunction(radii, thetas, grad_vals)
    sol.trace_u1 = BoundarySection.from_vector(m, K, u1)
    sol.trace_g1 = BoundarySection.from_vector(m, K, g1)
    sol.diagnostics = diag
    return sol


def _as_normal_data(phi: BoundarySection | np.ndarray, m: int, K: int) -> np.ndarray:
    if isinstance(phi, BoundarySection):
        if (phi.m, phi.K) != (m, K):
            raise ValueError(f"datum has (m, K) = ({phi.m}, {phi.K}); expected ({m}, {K})")
        return phi.normal.reshape(-1)
    arr = np.asarray(phi, dtype=complex).reshape(-1)
    if arr.size != m * (2 * K + 1):
        raise ValueError("datum must hold m (2K+1) Fourier coefficients")
    return arr


def solve_dirichlet(
    phi: BoundarySection | np.ndarray,
    A: CoefficientField | Discrepancy,
    K: int | None = None,
    sigma: float = 0.0,
    grid: TimeGrid | None = None,
    radii: np.ndarray = DEFAULT_RADII,
    n_theta: int = 64,
) -> BVPSolution:
    """Dirichlet problem ``u_1 = phi`` via the potential ``v_t = e^{-t Lambda~} h~+ + S~_A f``.

    ``phi`` gives the normal components (a BoundarySection or an array of
    ``m (2K+1)`` coefficients).  ``u = (v_t)_perp`` and the conjugate is
    ``(v_t)_par``.
    """
    wp = wellposedness_map("dirichlet", A, K, sigma, grid)
    hs = wp.hardy
    calc = hs.calc
    data = _as_normal_data(phi, calc.m, calc.K)
    ht = wp.solve(data)
    fs = hs.conormal_from_tilde(ht[:, None])[..., 0]
    hp = calc.D @ ht
    return _sample("dirichlet", hs, hp, ht, fs, radii, n_theta, hs.last_report, {"condition": wp.condition})


def _solve_conormal_route(
    problem: str,
    phi: BoundarySection | np.ndarray,
    A: CoefficientField | Discrepancy,
    K: int | None,
    sigma: float,
    grid: TimeGrid | None,
    radii: np.ndarray,
    n_theta: int,
    tol: float = 1e-10,
) -> BVPSolution:
    wp = wellposedness_map(problem, A, K, sigma, grid)
    hs, calc = wp.hardy, wp.hardy.calc
    m, Kc = calc.m, calc.K
    n = 2 * Kc + 1
    if isinstance(phi, BoundarySection):
        comp = phi.normal if problem == "neumann" else phi.tangential
        data = comp.reshape(-1)
    else:
        data = np.asarray(phi, dtype=complex).reshape(-1)
    if data.size != m * n:
        raise ValueError("datum must hold m (2K+1) Fourier coefficients")
    means = data[Kc::n]
    if np.max(np.abs(means)) > tol * max(1.0, float(np.max(np.abs(data)))):
        raise ValueError(f"{problem} datum must have zero mean in every component")
    full = np.zeros(calc.dim, dtype=complex)
    full[normal_index(m, Kc) if problem == "neumann" else tangential_index(m, Kc)] = data
    hp = wp.solve(full[wp.rows])
    fs = hs.conormal_from(hp[:, None])[..., 0]
    # potential with D v = f: h~+ = E0~+ D^{-1} h+ + (c, 0), c fixing mean (v_0)_perp = 0
    op = hs.op
    ht = hs.Etp @ (d_pseudoinverse(m, Kc) @ hp)
    v0 = ht + op.apply_points(fs, np.array([0.0]), tilde=True)[0]
    ht = ht.copy()
    ht[mean_index(m, Kc)[:m]] -= v0[mean_index(m, Kc)[:m]]
    return _sample(problem, hs, hp, ht, fs, radii, n_theta, hs.last_report, {"condition": wp.condition})


def solve_neumann(
    phi: BoundarySection | np.ndarray,
    A: CoefficientField | Discrepancy,
    K: int | None = None,
    sigma: float = 0.0,
    grid: TimeGrid | None = None,
    radii: np.ndarray = DEFAULT_RADII,
    n_theta: int = 64,
) -> BVPSolution:
    """Neumann problem ``(A_1 g_1)_perp = phi``; ``u`` is normalized to boundary mean zero."""
    return _solve_conormal_route("neumann", phi, A, K, sigma, grid, radii, n_theta)


def solve_regularity(
    phi: BoundarySection | np.ndarray,
    A: CoefficientField | Discrepancy,
    K: int | None = None,
    sigma: float = 0.0,
    grid: TimeGrid | None = None,
    radii: np.ndarray = DEFAULT_RADII,
    n_theta: int = 64,
) -> BVPSolution:
    """Regularity problem ``(g_1)_par = phi`` (the angular derivative of the trace)."""
    return _solve_conormal_route("regularity", phi, A, K, sigma, grid, radii, n_theta)


# ---------------------------------------------------------------------------
# conjugate pairs and the boundary semigroup


@dataclass(frozen=True)
class ConjugatePairReport:
    potential_identity: float
    remainder_v: np.ndarray
    remainder_f: np.ndarray
    growth_exponent: float
    times: np.ndarray


def conjugate_pair(sol: BVPSolution, ts: np.ndarray | None = None) -> ConjugatePairReport:
    """Split ``v_t = e^{-t Lambda~} v_0 + w~_t`` and ``f_t = e^{-t Lambda} f_0 + w_t``.

    Reports ``max_t ||D v_t - f_t||``, the remainder norms and the slope of
    ``log ||v_t - v_0||`` against ``log t`` for ``t <= 0.1``.
    """
    calc = sol.hardy.calc
    ts = np.geomspace(1e-3, 1.0, 25) if ts is None else np.asarray(ts, dtype=float)
    v = sol.potential(ts)
    f = sol.conormal(ts)
    v0 = sol.potential(np.array([0.0]))[0]
    f0 = sol.conormal(np.array([0.0]))[0]
    ident = float(np.max(np.linalg.norm(v @ calc.D.T - f, axis=1)))
    sv = np.array([calc.matrix(exp_abs(t), tilde=True) @ v0 for t in ts])
    sf = np.array([calc.matrix(exp_abs(t)) @ f0 for t in ts])
    rv = np.linalg.norm(v - sv, axis=1) * np.sqrt(2 * np.pi)
    rf = np.linalg.norm(f - sf, axis=1) * np.sqrt(2 * np.pi)
    growth = np.linalg.norm(v - v0[None], axis=1)
    sel = (ts <= 0.1) & (growth > 0)
    slope = float(np.polyfit(np.log(ts[sel]), np.log(growth[sel]), 1)[0]) if np.sum(sel) >= 2 else float("nan")
    return ConjugatePairReport(ident, rv, rf, slope, ts)


def semigroup_Pr(
    A1: CoefficientField, rs: list[float] | np.ndarray, K: int | None = None
) -> dict[float, np.ndarray]:
    """Matrices of ``P_r: u_1 -> u_r`` on normal boundary data for r-independent coefficients."""
    wp = wellposedness_map("dirichlet", A1, K)
    calc = wp.hardy.calc
    Tinv = np.linalg.inv(wp.matrix)
    rows = normal_index(calc.m, calc.K)
    out = {}
    for r in rs:
        if not 0 < r <= 1:
            raise ValueError("r must lie in (0, 1]")
        S = calc.matrix(exp_abs(-np.log(r)), tilde=True)
        out[float(r)] = (S @ wp.basis @ Tinv)[rows]
    return out


def rellich_residual(B0: CoefficientField, h_plus: BoundarySection) -> float:
    """``|(N h+, B0 h+)| / ||h+||^2``."""
    M = multiplication_matrix(B0, h_plus.K)
    h = h_plus.vector
    Nh = h.copy()
    Nh[: h.size // 2] *= -1
    return float(abs(2 * np.pi * np.vdot(M @ h, Nh)) / h_plus.norm() ** 2)
