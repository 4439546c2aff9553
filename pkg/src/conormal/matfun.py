"""Block Schur-Parlett evaluation of analytic matrix functions.

This is the fallback used when an eigenvector basis is too ill-conditioned
to trust ``V f(Lambda) V^{-1}``.  Eigenvalues are grouped into clusters,
the Schur form is reordered so clusters are contiguous, diagonal blocks are
evaluated by a contour integral around their cluster and the off-diagonal
blocks follow from the block Parlett recurrence (one Sylvester solve each).
"""

from __future__ import annotations

from typing import Callable

import numpy as np
from scipy.linalg import schur, solve_sylvester, solve_triangular
from scipy.linalg.lapack import ztrexc

ScalarFn = Callable[[np.ndarray], np.ndarray]


def cluster_eigenvalues(eigs: np.ndarray, delta: float, split_axis: bool = True) -> np.ndarray:
    """Label eigenvalues so that chains of points closer than ``delta`` share a label.

    With ``split_axis`` eigenvalues in different half planes never share a
    cluster, which keeps each cluster away from the imaginary axis.
    """
    n = eigs.size
    labels = -np.ones(n, dtype=int)
    cur = 0
    for i in range(n):
        if labels[i] >= 0:
            continue
        labels[i] = cur
        stack = [i]
        while stack:
            j = stack.pop()
            near = np.abs(eigs - eigs[j]) < delta
            if split_axis:
                near &= np.sign(eigs.real) == np.sign(eigs[j].real)
            for k in np.flatnonzero(near & (labels < 0)):
                labels[k] = cur
                stack.append(k)
        cur += 1
    return labels


def _reorder(T: np.ndarray, Z: np.ndarray, labels: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Swap diagonal entries with ``ztrexc`` until equal labels are contiguous."""
    T = np.asfortranarray(T.copy())
    Z = np.asfortranarray(Z.copy())
    lab = labels.copy()
    order = np.argsort(lab, kind="stable")
    target = lab[order]
    for pos in range(lab.size):
        if lab[pos] == target[pos]:
            continue
        src = pos + int(np.flatnonzero(lab[pos:] == target[pos])[0])
        T, Z, info = ztrexc(T, Z, src + 1, pos + 1, compq=1)
        if info != 0:
            raise np.linalg.LinAlgError(f"ztrexc failed with info={info}")
        lab = np.concatenate([lab[:pos], [lab[src]], np.delete(lab[pos:], src - pos)])
    return T, Z, lab


def _atom(T: np.ndarray, fn: ScalarFn, nodes: int = 128) -> np.ndarray:
    """``fn(T)`` for an upper triangular block with clustered eigenvalues (contour integral)."""
    d = np.diag(T)
    if T.shape[0] == 1:
        return fn(d).reshape(1, 1).astype(complex)
    c = d.mean()
    r0 = float(np.max(np.abs(d - c)))
    room = abs(c.real) - r0
    if room <= 0:
        raise np.linalg.LinAlgError("cluster touches the imaginary axis")
    rad = r0 + 0.5 * room
    zs = c + rad * np.exp(2j * np.pi * np.arange(nodes) / nodes)
    fz = fn(zs)
    eye = np.eye(T.shape[0])
    F = np.zeros_like(T, dtype=complex)
    for z, w in zip(zs, fz):
        # (1/2 pi i) \oint f(z) (z - T)^{-1} dz with dz = i (z - c) dphi
        F += w * (z - c) * solve_triangular(z * eye - T, eye)
    return F / nodes


def funm_schur_parlett(A: np.ndarray, fn: ScalarFn, delta: float = 0.1) -> np.ndarray:
    """Evaluate ``fn(A)`` by the block Schur-Parlett method.

    ``fn`` must accept complex arrays and be analytic on a disc around each
    cluster that does not meet the imaginary axis.
    """
    A = np.asarray(A, dtype=complex)
    if A.shape[0] == 0:
        return A.copy()
    T, Z = schur(A, output="complex")
    labels = cluster_eigenvalues(np.diag(T), delta)
    T, Z, labels = _reorder(T, Z, labels)
    starts = np.flatnonzero(np.r_[True, labels[1:] != labels[:-1]])
    bounds = list(zip(starts, np.r_[starts[1:], labels.size]))
    nb = len(bounds)
    F = np.zeros_like(T)
    for i, (a, b) in enumerate(bounds):
        F[a:b, a:b] = _atom(T[a:b, a:b], fn)
    for gap in range(1, nb):
        for i in range(nb - gap):
            j = i + gap
            (ai, bi), (aj, bj) = bounds[i], bounds[j]
            Tii, Tjj, Tij = T[ai:bi, ai:bi], T[aj:bj, aj:bj], T[ai:bi, aj:bj]
            rhs = F[ai:bi, ai:bi] @ Tij - Tij @ F[aj:bj, aj:bj]
            for k in range(i + 1, j):
                ak, bk = bounds[k]
                rhs += F[ai:bi, ak:bk] @ T[ak:bk, aj:bj] - T[ai:bi, ak:bk] @ F[ak:bk, aj:bj]
            # T_ii F_ij - F_ij T_jj = rhs
            F[ai:bi, aj:bj] = solve_sylvester(Tii, -Tjj, rhs)
    return Z @ F @ Z.conj().T
