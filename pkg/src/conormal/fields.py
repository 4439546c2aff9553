"""Boundary sections on the unit circle stored as truncated Fourier series.

A section with system size ``m`` takes values in C^{2m}.  Components
``0..m-1`` are the normal part and ``m..2m-1`` the tangential part (the
scalar coefficient along the unit tangent).  Coefficients are indexed by
``(component, k + K)`` for modes ``k = -K..K`` and the convention is

    f(theta) = sum_k fhat(k) exp(i k theta).

Norms use the non-normalized measure d(theta) on [0, 2pi).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


def modes(K: int) -> np.ndarray:
    """Return the integer modes ``-K..K``."""
    return np.arange(-K, K + 1)


def angles(n: int) -> np.ndarray:
    """Uniform angles ``2 pi j / n``, ``j = 0..n-1``."""
    return 2.0 * np.pi * np.arange(n) / n


def synthesize_array(coeffs: np.ndarray, gridsize: int) -> np.ndarray:
    """Evaluate Fourier coefficients (last axis ``-K..K``) on a uniform grid.

    Parameters
    ----------
    coeffs : (..., 2K+1) complex array
    gridsize : int
        Number of uniform angles.  Must be at least ``2K+1`` so that the
        evaluation is exact and invertible.

    Returns
    -------
    (..., gridsize) complex array of samples.
    """
    coeffs = np.asarray(coeffs)
    K = (coeffs.shape[-1] - 1) // 2
    if gridsize < 2 * K + 1:
        raise ValueError(
            f"gridsize {gridsize} cannot resolve modes up to |k|={K}; need >= {2 * K + 1}"
        )
    padded = np.zeros(coeffs.shape[:-1] + (gridsize,), dtype=complex)
    idx = modes(K) % gridsize
    padded[..., idx] = coeffs
    return np.fft.ifft(padded, axis=-1) * gridsize


def analyze_array(values: np.ndarray, K: int) -> np.ndarray:
    """Fourier coefficients ``-K..K`` of samples on a uniform grid (last axis).

    When the grid has fewer than ``2K+1`` points the missing modes are
    aliased; callers are expected to oversample.
    """
    values = np.asarray(values)
    n = values.shape[-1]
    freq = np.fft.fft(values, axis=-1) / n
    out = np.zeros(values.shape[:-1] + (2 * K + 1,), dtype=complex)
    ks = modes(K)
    keep = np.abs(ks) <= (n - 1) // 2
    out[..., keep] = freq[..., ks[keep] % n]
    return out


@dataclass(frozen=True)
class BoundarySection:
    """A C^{2m}-valued section of the circle, normal components first."""

    m: int
    K: int
    coeffs: np.ndarray

    def __post_init__(self) -> None:
        c = np.array(self.coeffs, dtype=complex)
        if c.shape != (2 * self.m, 2 * self.K + 1):
            raise ValueError(
                f"coefficient shape {c.shape} does not match m={self.m}, K={self.K}"
            )
        if not np.all(np.isfinite(c)):
            raise ValueError("coefficients must be finite")
        c.setflags(write=False)
        object.__setattr__(self, "coeffs", c)

    # construction ---------------------------------------------------------
    @classmethod
    def zeros(cls, m: int, K: int) -> "BoundarySection":
        return cls(m, K, np.zeros((2 * m, 2 * K + 1), dtype=complex))

    @classmethod
    def from_vector(cls, m: int, K: int, vec: np.ndarray) -> "BoundarySection":
        return cls(m, K, np.asarray(vec).reshape(2 * m, 2 * K + 1))

    @classmethod
    def from_parts(cls, normal: np.ndarray, tangential: np.ndarray) -> "BoundarySection":
        normal = np.atleast_2d(normal)
        tangential = np.atleast_2d(tangential)
        m = normal.shape[0]
        K = (normal.shape[1] - 1) // 2
        return cls(m, K, np.vstack([normal, tangential]))

    @classmethod
    def from_samples(cls, values: np.ndarray, m: int, K: int) -> "BoundarySection":
        """Analyze grid samples of shape ``(2m, n)``."""
        return cls(m, K, analyze_array(values, K))

    @classmethod
    def from_function(cls, func, m: int, K: int, oversample: int = 4) -> "BoundarySection":
        """Sample ``func(theta) -> (2m, n)`` on a fine grid and truncate."""
        n = oversample * (2 * K + 1)
        vals = np.asarray(func(angles(n)), dtype=complex).reshape(2 * m, n)
        return cls.from_samples(vals, m, K)

    # views ----------------------------------------------------------------
    @property
    def dim(self) -> int:
        return 2 * self.m * (2 * self.K + 1)

    @property
    def vector(self) -> np.ndarray:
        return self.coeffs.reshape(-1)

    @property
    def normal(self) -> np.ndarray:
        return self.coeffs[: self.m]

    @property
    def tangential(self) -> np.ndarray:
        return self.coeffs[self.m :]

    @property
    def mean(self) -> np.ndarray:
        """The k=0 coefficient of every component (the average over the circle)."""
        return self.coeffs[:, self.K]

    def synthesize(self, gridsize: int) -> np.ndarray:
        return synthesize_array(self.coeffs, gridsize)

    # algebra --------------------------------------------------------------
    def _check(self, other: "BoundarySection") -> None:
        if (self.m, self.K) != (other.m, other.K):
            raise ValueError(
                f"section shapes differ: (m={self.m}, K={self.K}) vs (m={other.m}, K={other.K})"
            )

    def __add__(self, other: "BoundarySection") -> "BoundarySection":
        self._check(other)
        return BoundarySection(self.m, self.K, self.coeffs + other.coeffs)

    def __sub__(self, other: "BoundarySection") -> "BoundarySection":
        self._check(other)
        return BoundarySection(self.m, self.K, self.coeffs - other.coeffs)

    def __mul__(self, scalar: complex) -> "BoundarySection":
        return BoundarySection(self.m, self.K, self.coeffs * scalar)

    __rmul__ = __mul__

    def norm(self) -> float:
        return float(np.sqrt(inner_product(self, self).real))

    def is_conjugate_symmetric(self, tol: float = 1e-12) -> bool:
        """True when every component is a real-valued function."""
        return bool(np.allclose(self.coeffs[:, ::-1].conj(), self.coeffs, atol=tol, rtol=0))


def inner_product(f: BoundarySection, g: BoundarySection) -> complex:
    """L2 pairing ``2 pi sum fhat conj(ghat)`` with the d(theta) measure."""
    f._check(g)
    return complex(2.0 * np.pi * np.vdot(g.coeffs, f.coeffs))


def project_H(f: BoundarySection) -> BoundarySection:
    """Orthogonal projection onto mean-zero sections (zero every k=0 coefficient)."""
    c = np.array(f.coeffs)
    c[:, f.K] = 0.0
    return BoundarySection(f.m, f.K, c)


def project_Hperp(f: BoundarySection) -> BoundarySection:
    """Orthogonal projection onto constant sections."""
    c = np.zeros_like(f.coeffs)
    c[:, f.K] = f.coeffs[:, f.K]
    return BoundarySection(f.m, f.K, c)


def n_plus(f: BoundarySection) -> BoundarySection:
    """Keep the tangential part, ``(0, f_par)``."""
    c = np.array(f.coeffs)
    c[: f.m] = 0.0
    return BoundarySection(f.m, f.K, c)


def n_minus(f: BoundarySection) -> BoundarySection:
    """Keep the normal part, ``(f_perp, 0)``."""
    c = np.array(f.coeffs)
    c[f.m :] = 0.0
    return BoundarySection(f.m, f.K, c)


def apply_N(f: BoundarySection) -> BoundarySection:
    """``N = diag(-I, I)``."""
    c = np.array(f.coeffs)
    c[: f.m] *= -1.0
    return BoundarySection(f.m, f.K, c)


def random_section(rng: np.random.Generator, m: int, K: int, decay: float = 0.0) -> BoundarySection:
    """Complex Gaussian coefficients, optionally damped like ``exp(-decay |k|)``."""
    shape = (2 * m, 2 * K + 1)
    c = rng.standard_normal(shape) + 1j * rng.standard_normal(shape)
    c *= np.exp(-decay * np.abs(modes(K)))[None, :]
    return BoundarySection(m, K, c)


def trapezoid_inner(f: BoundarySection, g: BoundarySection, gridsize: int | None = None) -> complex:
    """Inner product computed by uniform quadrature of grid samples."""
    f._check(g)
    n = gridsize or 2 * (2 * f.K + 1)
    fv = f.synthesize(n)
    gv = g.synthesize(n)
    return complex(np.sum(fv * gv.conj()) * 2.0 * np.pi / n)


@dataclass(frozen=True)
class PolarGridFunction:
    """Samples on a polar grid: ``values[component, j, i]`` at ``(radii[j], thetas[i])``."""

    radii: np.ndarray
    thetas: np.ndarray
    values: np.ndarray

    def __post_init__(self) -> None:
        r = np.asarray(self.radii, dtype=float)
        th = np.asarray(self.thetas, dtype=float)
        v = np.asarray(self.values, dtype=complex)
        if v.ndim != 3 or v.shape[1:] != (r.size, th.size):
            raise ValueError(f"values shape {v.shape} inconsistent with grid ({r.size}, {th.size})")
        if np.any(np.diff(r) <= 0):
            raise ValueError("radii must be strictly increasing")
        if not np.all(np.isfinite(v)):
            raise ValueError("grid values must be finite")
        for a in (r, th, v):
            a.setflags(write=False)
        object.__setattr__(self, "radii", r)
        object.__setattr__(self, "thetas", th)
        object.__setattr__(self, "values", v)

    @property
    def components(self) -> int:
        return self.values.shape[0]
