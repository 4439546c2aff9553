import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conormal.coefficients import (
    CoefficientField,
    DegenerateCoefficientError,
    Discrepancy,
    accretivity_garding,
    accretivity_pointwise,
    carleson_norm,
    conjugate_coefficients,
    hat_transform,
    multiplication_matrix,
    pointwise_inverse,
    pullback_coefficients,
    random_accretive,
)
from conormal.fields import angles
from conormal.timegrid import TimeGrid

seeds = st.integers(0, 2**31 - 1)


def test_hat_of_identity_and_diagonal():
    I = CoefficientField.identity(2)
    assert hat_transform(I).max_entry_error(I) < 1e-15
    A = CoefficientField.constant(np.diag([2.0, 3.0]))
    assert np.allclose(hat_transform(A).entries[:, :, 0], np.diag([0.5, 3.0]))


@given(seeds, st.sampled_from([1, 2]))
@settings(max_examples=15, deadline=None)
def test_hat_is_an_involution(seed, m):
    A = random_accretive(np.random.default_rng(seed), m, 4)
    assert hat_transform(hat_transform(A, tol=1e-14), 4).max_entry_error(A) < 1e-11


def test_hat_rejects_singular_normal_block():
    A = CoefficientField.constant(np.diag([0.0, 1.0]), 1)
    with pytest.raises(DegenerateCoefficientError) as exc:
        hat_transform(A)
    assert np.isfinite(exc.value.theta)


def test_conjugate_examples():
    A = CoefficientField.constant(np.diag([2.0, 5.0]))
    assert np.allclose(conjugate_coefficients(A).entries[:, :, 0], np.diag([1 / 5, 1 / 2]))
    I = CoefficientField.identity(1)
    assert conjugate_coefficients(I).max_entry_error(I) < 1e-15
    b = 0.7
    U = CoefficientField.constant(np.array([[1.0, b], [0.0, 1.0]]))
    assert np.allclose(conjugate_coefficients(U).entries[:, :, 0], [[1, 0], [b, 1]])


@given(seeds)
@settings(max_examples=10, deadline=None)
def test_conjugation_is_an_involution(seed):
    A = random_accretive(np.random.default_rng(seed), 1, 3)
    back = conjugate_coefficients(conjugate_coefficients(A, tol=1e-14), 3)
    assert back.max_entry_error(A) < 1e-11


def test_pointwise_inverse_residual_reported():
    A = random_accretive(np.random.default_rng(3), 1, 3)
    inv = pointwise_inverse(A, tol=1e-13)
    assert inv.residual < 1e-13
    prod = np.einsum("nij,njk->nik", A.values(64), inv.values(64))
    assert np.max(np.abs(prod - np.eye(2))) < 1e-12


def test_accretivity_examples():
    assert accretivity_garding(CoefficientField.identity(1, 2)) == pytest.approx(1.0)
    assert accretivity_garding(CoefficientField.constant(np.diag([2.0, 3.0]), 2)) == pytest.approx(2.0)
    assert accretivity_pointwise(CoefficientField.identity(1)) == pytest.approx(1.0)
    H = CoefficientField.constant(np.diag([1.0, 4.0]))
    assert accretivity_pointwise(H) == pytest.approx(1.0)


def test_garding_of_shear_matches_brute_force():
    # constant A: the form on H_1 is blockwise per mode; mode 0 has only the normal entry
    A = CoefficientField.constant(np.array([[1.0, 1.9], [0.0, 1.0]]), 3)
    herm = 0.5 * (A.entries[:, :, 3] + A.entries[:, :, 3].conj().T)
    brute = min(np.linalg.eigvalsh(herm)[0], herm[0, 0].real)
    assert accretivity_garding(A) == pytest.approx(brute, abs=1e-13)
    assert brute == pytest.approx(0.05)


@given(seeds)
@settings(max_examples=10, deadline=None)
def test_pointwise_accretivity_below_garding(seed):
    A = random_accretive(np.random.default_rng(seed), 1, 4, strength=0.5)
    assert accretivity_pointwise(A) <= accretivity_garding(A, K=12) + 1e-10


def test_multiplication_by_single_mode_shifts():
    e = np.zeros((2, 2, 3), dtype=complex)
    e[0, 0, 2] = 1.0  # e^{i theta} in the normal-normal entry
    M = multiplication_matrix(CoefficientField(1, 1, e), 3)
    f = np.zeros(14, dtype=complex)
    f[3 + 1] = 1.0  # normal mode k=1
    out = M @ f
    expect = np.zeros(14, dtype=complex)
    expect[3 + 2] = 1.0
    assert np.allclose(out, expect)


def test_pullback_identity_and_rotation():
    A = random_accretive(np.random.default_rng(1), 1, 3)
    n = A.dealiased_gridsize()
    same = pullback_coefficients(A, np.tile(np.eye(2), (n, 1, 1)))
    assert same.max_entry_error(A) < 1e-13
    a = 0.4
    R = np.array([[np.cos(a), -np.sin(a)], [np.sin(a), np.cos(a)]])
    rot = pullback_coefficients(A, np.tile(R, (n, 1, 1)))
    expect = np.einsum("ij,njk,lk->nil", R.T, A.values(n), R.T)
    assert np.max(np.abs(rot.values(n) - expect)) < 1e-13


def test_pullback_scaling_is_invariant_in_two_dimensions():
    A = random_accretive(np.random.default_rng(2), 1, 3)
    n = A.dealiased_gridsize()
    scaled = pullback_coefficients(A, np.tile(2.5 * np.eye(2), (n, 1, 1)))
    assert scaled.max_entry_error(A) < 1e-13


def test_carleson_norm_of_zero():
    B0 = CoefficientField.identity(1, 2)
    assert carleson_norm(Discrepancy.zero(B0, TimeGrid.geometric())) == 0.0


def _constant_cutoff(c, t0, grid):
    B0 = CoefficientField.identity(1, 2)
    E = CoefficientField.constant(np.eye(2) * c, 2)
    return Discrepancy.from_profile(B0, grid, lambda a, b: max(0.0, min(b, t0) - a) / (b - a), E)


def test_carleson_norm_constant_box():
    # |E| = c for t < t0: direct double sum over the box family, done by hand
    grid = TimeGrid.geometric(t_min=1e-3, t_max=5.0, split=0.5)
    c, t0 = 0.3, 0.5
    got = carleson_norm(_constant_cutoff(c, t0, grid), q=2.0**-0.25)
    q, r0 = 2.0**-0.25, 0.25
    ts = r0 * q ** np.arange(int(np.floor(np.log(grid.edges[1] / r0) / np.log(q))) + 1)
    best = 0.0
    j = 2
    while 2.0**-j > grid.edges[1]:
        rho = 2.0**-j
        j += 1
        sel = ts[ts < rho]
        # Whitney sup is c whenever the box meets t < t0
        hits = np.sum(sel / 2 < t0)
        best = max(best, c**2 * hits * np.log(1 / q))
    assert got == pytest.approx(np.sqrt(best), rel=1e-12)


def test_carleson_truncation_monotone_and_constant_not_small():
    grid = TimeGrid.geometric(t_min=1e-3, t_max=5.0)
    E = _constant_cutoff(0.2, 10.0, grid)
    vals = [E.carleson_norm(t) for t in (0.05, 0.1, 0.3, 1.0)]
    assert np.all(np.diff(vals) >= 0)
    assert vals[0] > 0.1 * vals[-1]


def test_discrepancy_adjoint_and_scaling():
    grid = TimeGrid.geometric(t_max=3.0)
    E = _constant_cutoff(0.2, 1.0, grid)
    assert E.scaled(2.0).sup_norm() == pytest.approx(2 * E.sup_norm())
    assert E.adjoint().sup_norm() == pytest.approx(E.sup_norm())
