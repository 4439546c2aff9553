"""Finite-volume Dirichlet solver for ``div A grad u = 0`` in polar coordinates.

Independent of the spectral pipeline: cell-centred rings ``r_j = (j + 1/2) h``,
radial fluxes on ring faces, fourth-order periodic angular differences and a
sparse direct solve.  ``A`` acts on gradients in the ``(e_r, e_theta)`` frame.
"""

from __future__ import annotations

from typing import Callable

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import spsolve

from .coefficients import CoefficientField
from .fields import PolarGridFunction, angles, synthesize_array

MatrixField = Callable[[np.ndarray, np.ndarray], np.ndarray]


def _periodic_d1(n: int) -> sp.csr_matrix:
    """Fourth-order centred ``d/dtheta`` on ``n`` periodic points."""
    h = 2 * np.pi / n
    offsets = [-2, -1, 1, 2]
    coef = np.array([1, -8, 8, -1]) / (12 * h)
    D = sp.lil_matrix((n, n))
    for o, c in zip(offsets, coef):
        for i in range(n):
            D[i, (i + o) % n] += c
    return D.tocsr()


def _as_field(A: CoefficientField | MatrixField) -> MatrixField:
    if isinstance(A, CoefficientField):
        if A.m != 1:
            raise ValueError("the oracle handles scalar equations (m = 1) only")

        def fn(r: np.ndarray, th: np.ndarray) -> np.ndarray:
            th = np.atleast_1d(th)
            ks = np.arange(-A.K, A.K + 1)
            vals = np.einsum("abk,...k->...ab", A.entries, np.exp(1j * th[..., None] * ks))
            return np.broadcast_to(vals, np.broadcast_shapes(np.shape(r), th.shape) + (2, 2))

        return fn
    return A


def fd_oracle(
    A: CoefficientField | MatrixField,
    phi: Callable[[np.ndarray], np.ndarray] | np.ndarray,
    n_r: int = 128,
    n_theta: int = 256,
) -> PolarGridFunction:
    """Solve the Dirichlet problem ``u = phi`` on the unit circle.

    Parameters
    ----------
    A : CoefficientField or callable
        Real elliptic coefficients; a callable maps ``(r, theta)`` arrays to
        ``(..., 2, 2)`` matrices.
    phi : callable or array
        Boundary values ``phi(theta)`` or Fourier coefficients ``(2K+1,)``.
    n_r, n_theta : int
        Rings and angular points (``n_theta`` even, for the reflection at the origin).

    Returns
    -------
    PolarGridFunction
        ``u`` at ``((j + 1/2)/n_r, 2 pi i / n_theta)``.
    """
    if n_theta % 2:
        raise ValueError("n_theta must be even")
    coeff = _as_field(A)
    h = 1.0 / n_r
    th = angles(n_theta)
    r = (np.arange(n_r) + 0.5) * h
    faces = np.arange(1, n_r + 1) * h  # outer face of ring j
    if callable(phi):
        g = np.asarray(phi(th), dtype=float)
    else:
        c = np.asarray(phi, dtype=complex).reshape(1, -1)
        g = synthesize_array(c, n_theta)[0].real
    Dth = _periodic_d1(n_theta)
    g_th = Dth @ g

    Af = np.real(coeff(faces[:, None], th[None, :]))  # (n_r, n_theta, 2, 2)
    Ac = np.real(coeff(r[:, None], th[None, :]))
    if np.any(Af[..., 0, 0] <= 0) or np.any(Ac[..., 1, 1] <= 0):
        raise ValueError("indefinite discrete operator: coefficient diagonal not positive")

    nt = n_theta
    size = n_r * nt
    idx = np.arange(size).reshape(n_r, nt)
    rows = []
    rhs = np.zeros(size)

    def block(j: int, jj: int, mat) -> None:
        rows.append((j, jj, sp.csr_matrix(mat)))

    # radial face fluxes F_r(j+1/2) = a (u_{j+1} - u_j)/h + b/r (u_theta averaged)
    for j in range(n_r):
        a = Af[j, :, 0, 0]
        b = Af[j, :, 0, 1]
        rf = faces[j]
        w = rf / (r[j] * h)  # (1/r_j) * r_face / h
        if j < n_r - 1:
            dr_self, dr_next = -a / h, a / h
            block(j, j, sp.diags(-w * dr_self) + sp.diags(-w * 0.5 * b / rf) @ Dth)
            block(j, j + 1, sp.diags(-w * dr_next) + sp.diags(-w * 0.5 * b / rf) @ Dth)
            # flux into ring j+1 from its inner face
            w2 = rf / (r[j + 1] * h)
            block(j + 1, j, sp.diags(w2 * dr_self) + sp.diags(w2 * 0.5 * b / rf) @ Dth)
            block(j + 1, j + 1, sp.diags(w2 * dr_next) + sp.diags(w2 * 0.5 * b / rf) @ Dth)
        else:
            # boundary face: u_r = (phi - u)/(h/2), u_theta = phi_theta
            block(j, j, sp.diags(w * a / (0.5 * h)))
            rhs[idx[j]] += w * (a * g / (0.5 * h) + b * g_th / rf)

    # angular flux F_theta = c u_r + d u_theta / r at cell centres, then (1/r) d/dtheta
    shift = np.roll(np.eye(nt), nt // 2, axis=1)  # u(theta + pi)
    for j in range(n_r):
        c = Ac[j, :, 1, 0]
        d = Ac[j, :, 1, 1]
        outer = Dth / r[j]
        block(j, j, -(outer @ sp.diags(d / r[j]) @ Dth))
        if j == 0:
            # u_r ~ (u_1 - u(-h/2)) / (2h) with u(-h/2, theta) = u_0(theta + pi)
            block(j, 1, -(outer @ sp.diags(c / (2 * h))))
            block(j, 0, outer @ sp.diags(c / (2 * h)) @ sp.csr_matrix(shift))
        elif j < n_r - 1:
            block(j, j + 1, -(outer @ sp.diags(c / (2 * h))))
            block(j, j - 1, outer @ sp.diags(c / (2 * h)))
        else:
            # one-sided with nodes r - h, r, r + h/2 (the boundary)
            block(j, j - 1, -(outer @ sp.diags(-c / (3 * h))))
            block(j, j, -(outer @ sp.diags(-c / h)))
            rhs[idx[j]] += outer @ (c * 4.0 / (3 * h) * g)

    grid = [[None] * n_r for _ in range(n_r)]
    for j, jj, mat in rows:
        grid[j][jj] = mat if grid[j][jj] is None else grid[j][jj] + mat
    for j in range(n_r):
        if grid[j][j] is None:
            grid[j][j] = sp.csr_matrix((nt, nt))
    L = sp.bmat(grid, format="csc")
    u = spsolve(L, rhs)
    if not np.all(np.isfinite(u)):
        raise ValueError("indefinite discrete operator: sparse solve failed")
    return PolarGridFunction(r, th, u.reshape(1, n_r, nt))


def relative_l2(U: PolarGridFunction, V: PolarGridFunction) -> float:
    """Area-weighted relative L2 difference of two samplings on the same grid."""
    if U.values.shape != V.values.shape:
        raise ValueError("grids differ")
    w = U.radii[None, :, None]
    num = np.sum(w * np.abs(U.values - V.values) ** 2)
    den = np.sum(w * np.abs(V.values) ** 2)
    return float(np.sqrt(num / den))
