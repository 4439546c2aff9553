import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conormal.fields import (
    BoundarySection,
    PolarGridFunction,
    analyze_array,
    apply_N,
    inner_product,
    n_minus,
    n_plus,
    project_H,
    project_Hperp,
    random_section,
    synthesize_array,
    trapezoid_inner,
)

seeds = st.integers(0, 2**31 - 1)


def test_constant_mode_synthesizes_to_one():
    f = BoundarySection.zeros(1, 3)
    c = np.array(f.coeffs)
    c[0, 3] = 1.0
    vals = BoundarySection(1, 3, c).synthesize(8)
    assert np.allclose(vals[0], 1.0)
    assert np.allclose(vals[1], 0.0)


def test_cos_sampled_at_quarter_points():
    c = np.zeros((2, 3), dtype=complex)
    c[0, 0] = c[0, 2] = 0.5
    vals = BoundarySection(1, 1, c).synthesize(4)[0]
    assert np.allclose(vals, [1, 0, -1, 0], atol=1e-15)


def test_synthesize_rejects_coarse_grid():
    with pytest.raises(ValueError):
        synthesize_array(np.ones(7), 5)


@given(seeds)
@settings(max_examples=25, deadline=None)
def test_analyze_synthesize_round_trip(seed):
    f = random_section(np.random.default_rng(seed), 2, 8)
    back = analyze_array(f.synthesize(40), 8)
    assert np.max(np.abs(back - f.coeffs)) < 1e-13


def test_project_H_basic_cases():
    c = np.zeros((2, 5), dtype=complex)
    c[:, 2] = [3.0, -1.0]
    const = BoundarySection(1, 2, c)
    assert np.allclose(project_H(const).coeffs, 0)
    e = np.zeros((2, 5), dtype=complex)
    e[0, 3] = 1.0
    mode = BoundarySection(1, 2, e)
    assert np.array_equal(project_H(mode).coeffs, mode.coeffs)


@given(seeds)
@settings(max_examples=25, deadline=None)
def test_hodge_splitting_of_L2_is_orthogonal(seed):
    f = random_section(np.random.default_rng(seed), 2, 5)
    P = project_H(f)
    assert np.max(np.abs(project_H(P).coeffs - P.coeffs)) < 1e-14
    assert np.allclose(P.mean, 0)
    total = P.norm() ** 2 + project_Hperp(f).norm() ** 2
    assert total == pytest.approx(f.norm() ** 2, rel=1e-13)


def test_inner_product_of_ones_is_2pi():
    c = np.zeros((2, 3), dtype=complex)
    c[1, 1] = 1.0
    one = BoundarySection(1, 1, c)
    assert inner_product(one, one) == pytest.approx(2 * np.pi)


def test_orthogonal_modes():
    a = np.zeros((2, 5), dtype=complex)
    b = np.zeros((2, 5), dtype=complex)
    a[0, 3], b[0, 4] = 1.0, 1.0
    assert inner_product(BoundarySection(1, 2, a), BoundarySection(1, 2, b)) == 0


@given(seeds)
@settings(max_examples=25, deadline=None)
def test_parseval_against_trapezoid(seed):
    rng = np.random.default_rng(seed)
    f, g = random_section(rng, 1, 6), random_section(rng, 1, 6)
    assert abs(inner_product(f, g) - trapezoid_inner(f, g)) < 1e-12 * (1 + f.norm() * g.norm())
    assert inner_product(f, f).real >= 0
    assert abs(inner_product(f, f).imag) < 1e-14 * f.norm() ** 2


@given(seeds)
@settings(max_examples=25, deadline=None)
def test_N_splitting(seed):
    rng = np.random.default_rng(seed)
    f, g = random_section(rng, 2, 3), random_section(rng, 2, 3)
    assert np.array_equal((n_plus(f) + n_minus(f)).coeffs, f.coeffs)
    assert inner_product(n_plus(f), n_minus(g)) == 0
    assert np.array_equal(apply_N(apply_N(f)).coeffs, f.coeffs)
    assert np.array_equal(apply_N(f).coeffs, (n_plus(f) - n_minus(f)).coeffs)


def test_real_field_is_conjugate_symmetric():
    f = BoundarySection.from_function(lambda th: np.vstack([np.cos(th) + 2, np.sin(3 * th)]), 1, 4)
    assert f.is_conjugate_symmetric()
    assert not (f * 1j).is_conjugate_symmetric()


def test_shape_validation():
    with pytest.raises(ValueError):
        BoundarySection(1, 2, np.zeros((2, 4)))
    with pytest.raises(ValueError):
        BoundarySection(1, 0, np.array([[np.nan], [0]]))
    with pytest.raises(ValueError):
        PolarGridFunction(np.array([0.5, 0.2]), np.zeros(3), np.zeros((1, 2, 3)))
