import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conormal.calculus import Calculus, chi_minus, chi_plus, exp_abs
from conormal.coefficients import (
    CoefficientField,
    Discrepancy,
    hat_transform,
    multiplication_matrix,
    random_accretive,
)
from conormal.fields import BoundarySection, project_H, random_section, synthesize_array
from conormal.solver import (
    HardySystem,
    IntegralOperator,
    apply_SA,
    apply_tilde_SA,
    conjugate_pair,
    duality_residual,
    perturbed_hardy,
    phi1_int,
    phi2_int,
    rellich_residual,
    sa_decomposition_residual,
    semigroup_Pr,
    semigroup_trajectory,
    solve_conormal,
    solve_dirichlet,
    solve_neumann,
    solve_regularity,
    wellposedness_map,
)
from conormal.timegrid import TimeGrid

seeds = st.integers(0, 2**31 - 1)


def _cos(K):
    phi = np.zeros(2 * K + 1, dtype=complex)
    phi[K - 1] = phi[K + 1] = 0.5
    return phi


def _cutoff(eps, t0=1.0):
    return lambda a, b: eps * max(0.0, min(b, t0) - a) / (b - a)


def _small_instance(seed, K=4, eps=0.2, m=1):
    rng = np.random.default_rng(seed)
    B0 = random_accretive(rng, m, K)
    E = Discrepancy.from_profile(B0, TimeGrid.geometric(t_max=30.0), _cutoff(eps), random_accretive(rng, m, 2))
    return rng, Calculus(B0, 0.0, K), E


def test_phi_integrals_series_and_closed_form():
    h = np.array([1e-4, 0.3, 2.0])
    x, w = np.polynomial.legendre.leggauss(40)
    for mu in (1e-6 + 0j, 0.7 + 0.2j, 3.0 + 0j):
        direct1 = (1 - np.exp(-h * mu)) / mu
        assert np.allclose(phi1_int(h, np.full(3, mu)), direct1, rtol=1e-12)
        for hh, p2 in zip(h, phi2_int(h, np.full(3, mu))):
            y = 0.5 * hh * (1 + x)
            want = np.sum(0.5 * hh * w * (hh - y) * np.exp(-mu * y))
            assert p2 == pytest.approx(want, rel=1e-12)


def test_semigroup_trajectory_identity_mode():
    calc = Calculus(CoefficientField.identity(1), 0.0, 3)
    c = np.zeros((2, 7), dtype=complex)
    c[:, 4] = [1.0, 1j]  # D-eigenvector with eigenvalue +1
    h = BoundarySection(1, 3, c)
    grid = TimeGrid.geometric(t_max=5.0)
    traj = semigroup_trajectory(h, calc, grid)
    assert np.allclose(traj.values, np.exp(-grid.mids)[:, None] * h.vector[None, :], atol=1e-14)
    with pytest.raises(ValueError):
        semigroup_trajectory(BoundarySection(1, 3, np.conj(c)), calc, grid)


def test_semigroup_trajectory_ode_second_order():
    rng = np.random.default_rng(0)
    calc = Calculus(random_accretive(rng, 1, 3), 0.0, 3)
    h = BoundarySection.from_vector(1, 3, calc.hardy()[0] @ project_H(random_section(rng, 1, 3)).vector)
    errs = []
    for n in (50, 100):
        grid = TimeGrid(np.linspace(0, 1, n + 1))
        f = semigroup_trajectory(h, calc, grid).values
        dt = grid.mids[1] - grid.mids[0]
        r = (f[1:] - f[:-1]) / dt + 0.5 * (f[1:] + f[:-1]) @ calc.D0.T
        errs.append(np.max(np.abs(r)))
    assert errs[0] / errs[1] == pytest.approx(4.0, rel=0.05)
    assert semigroup_trajectory(h, calc, TimeGrid.geometric(t_min=1e-6, t_max=5)).values[0] == pytest.approx(
        h.vector, abs=1e-4)


def test_zero_discrepancy_gives_zero_operators():
    calc = Calculus(random_accretive(np.random.default_rng(1), 1, 3), 0.0, 3)
    grid = TimeGrid.geometric(t_max=10.0)
    E = Discrepancy.zero(calc.B0, grid)
    f = semigroup_trajectory(
        BoundarySection.from_vector(1, 3, calc.hardy()[0] @ project_H(random_section(np.random.default_rng(2), 1, 3)).vector),
        calc, grid, sampling="average")
    assert np.all(apply_SA(E, f, calc).values == 0)
    assert np.all(apply_tilde_SA(E, f, calc).values == 0)
    sol, rep = solve_conormal(f.section(0) * 0 + BoundarySection.from_vector(1, 3, f.values[0] * 0), E, calc)
    assert np.all(sol.values == 0)
    h = random_section(np.random.default_rng(3), 1, 3)
    assert np.allclose(perturbed_hardy(h, E, calc).vector, calc.hardy()[0] @ h.vector)


def test_sa_decomposition_holds():
    for sigma in (0.0, 1.0):
        calc = Calculus(random_accretive(np.random.default_rng(4), 1, 3), sigma, 4)
        assert sa_decomposition_residual(calc) < 1e-9


def test_single_cell_impulse_against_quadrature():
    rng = np.random.default_rng(0)
    K = 3
    B0 = random_accretive(rng, 1, K)
    calc = Calculus(B0, 0.0, K)
    grid = TimeGrid(np.array([0, 0.2, 0.5, 0.9, 1.5, 3.0]))
    Ec = random_accretive(rng, 1, K)
    E = Discrepancy.from_profile(B0, grid, lambda a, b: 0.3 if (a >= 0.2 and b <= 0.5) else 0.0, Ec)
    op = IntegralOperator(calc, E)
    f = rng.standard_normal(calc.dim) + 0j
    g = calc.D @ (0.3 * multiplication_matrix(Ec, K)) @ f
    Ep, Em = calc.matrix(chi_plus()), calc.matrix(chi_minus())

    def brute(t):
        # S_A f_t = int_0^t e^{-(t-s) Lambda} E0+ D E f ds - int_t^oo e^{-(s-t) Lambda} E0- D E f ds
        acc = np.zeros(calc.dim, dtype=complex)
        lo, hi = 0.2, 0.5
        for a, b, sign, proj in ((lo, min(t, hi), 1, Ep), (max(t, lo), hi, -1, Em)):
            if b <= a:
                continue
            x, w = np.polynomial.legendre.leggauss(30)
            ss, ws = a + 0.5 * (b - a) * (1 + x), 0.5 * (b - a) * w
            for s, wt in zip(ss, ws):
                acc += sign * wt * calc.matrix(exp_abs(abs(t - s))) @ proj @ g
        return acc

    for t in (0.0, 0.1, 0.35, 0.7, 2.0):
        got = op.apply_points(f[None, :], np.array([t]))[0]
        want = brute(t)
        assert np.linalg.norm(got - want) < 1e-10 * np.linalg.norm(want)


def test_tilde_operator_consistency():
    rng, calc, E = _small_instance(5)
    op = IntegralOperator(calc, E)
    f = rng.standard_normal((op.ns, calc.dim)) + 0j
    ts = np.array([0.0, 0.3, 0.8, 2.0])
    S = op.apply_points(f, ts)
    St = op.apply_points(f, ts, tilde=True)
    assert np.max(np.abs(St @ calc.D.T - S)) < 1e-12 * np.max(np.abs(S))


def test_iterate_dense_agree_and_residual():
    rng, calc, E = _small_instance(6)
    h = BoundarySection.from_vector(1, 4, calc.hardy()[0] @ project_H(random_section(rng, 1, 4)).vector)
    op = IntegralOperator(calc, E)
    assert op.spectral_radius() < 0.5
    F0 = op.semigroup_cells(h.vector)
    x_it, r_it = op.solve(F0, "iterate")
    x_de, r_de = op.solve(F0, "dense")
    assert np.linalg.norm(x_it - x_de) < 1e-9 * np.linalg.norm(x_de)
    assert r_it.residual < 1e-9 and r_de.residual < 1e-9
    assert r_it.status == "iteratively invertible"
    traj, _ = solve_conormal(h, E, calc)
    assert traj.mean_leak() < 1e-10


def test_iterations_drop_with_eps_and_lipschitz():
    rng, calc, E = _small_instance(7, eps=0.2)
    h = calc.hardy()[0] @ project_H(random_section(rng, 1, 4)).vector
    its, sols = [], []
    for eps in (1.0, 0.5, 0.25):
        op = IntegralOperator(calc, E.scaled(eps))
        x, rep = op.solve(op.semigroup_cells(h), "iterate")
        its.append(rep.iterations)
        sols.append(x)
    assert its[0] >= its[1] >= its[2]
    d1 = np.linalg.norm(sols[0] - sols[1])
    d2 = np.linalg.norm(sols[1] - sols[2])
    assert d2 < d1


def test_perturbed_projection_and_duality():
    _, calc, E = _small_instance(8)
    P = HardySystem(calc, E).matrix()
    assert np.linalg.norm(P @ P - P, 2) < 1e-8
    assert duality_residual(E) < 1e-7
    assert duality_residual(E, sigma=1.0) < 1e-7


def test_wellposedness_identity_dirichlet():
    K = 4
    wp = wellposedness_map("dirichlet", CoefficientField.identity(1), K)
    phi = np.zeros(2 * K + 1, dtype=complex)
    phi[K + 1] = 1.0
    ht = wp.solve(phi)
    assert np.allclose(ht[: 2 * K + 1], phi)
    assert wp.condition < 10


def test_hermitean_maps_are_invertible_and_stable():
    A = random_accretive(np.random.default_rng(9), 1, 2, hermitean=True)
    for problem in ("dirichlet", "neumann", "regularity"):
        c = [wellposedness_map(problem, A, K).condition for K in (6, 12)]
        assert np.isfinite(c).all()
        assert abs(c[1] - c[0]) / c[0] < 0.1


def test_block_maps_invertible():
    A = random_accretive(np.random.default_rng(10), 1, 2, block=True)
    for problem in ("dirichlet", "neumann", "regularity"):
        assert np.isfinite(wellposedness_map(problem, A, 6).condition)


def test_dirichlet_identity_cos():
    K = 16
    sol = solve_dirichlet(_cos(K), CoefficientField.identity(1), K=K)
    r, th = sol.u.radii[:, None], sol.u.thetas[None, :]
    assert np.max(np.abs(sol.u.values[0] - r * np.cos(th))) < 1e-10
    conj = sol.conjugate.values[0] + r * np.sin(th)
    assert np.max(np.abs(conj - conj.mean())) < 1e-10


def test_dirichlet_constant():
    K = 4
    phi = np.zeros(2 * K + 1, dtype=complex)
    phi[K] = 2.5
    sol = solve_dirichlet(phi, CoefficientField.identity(1), K=K)
    assert np.max(np.abs(sol.u.values - 2.5)) < 1e-12
    assert np.max(np.abs(sol.grad.values)) < 1e-12


def test_neumann_and_regularity_identity():
    K = 8
    A = CoefficientField.identity(1)
    sol_n = solve_neumann(_cos(K), A, K=K)
    r, th = sol_n.u.radii[:, None], sol_n.u.thetas[None, :]
    assert np.max(np.abs(sol_n.u.values[0] - r * np.cos(th))) < 1e-10
    minus_sin = 1j * np.arange(-K, K + 1) * _cos(K)
    sol_r = solve_regularity(minus_sin, A, K=K)
    assert np.max(np.abs(sol_r.u.values[0] - r * np.cos(th))) < 1e-10
    zero = solve_neumann(np.zeros(2 * K + 1), A, K=K)
    assert np.max(np.abs(zero.grad.values)) < 1e-14
    with pytest.raises(ValueError):
        solve_neumann(np.ones(2 * K + 1), A, K=K)


def test_route_equivalence_with_discrepancy():
    rng, calc, E = _small_instance(11, K=6)
    phi = np.zeros(13, dtype=complex)
    c = rng.standard_normal(5) + 1j * rng.standard_normal(5)
    phi[4:9] = 0.5 * (c + c[::-1].conj())
    phi[6] = 0.0
    d = solve_dirichlet(phi, E)
    # regularity datum: tangential derivative of phi
    reg = solve_regularity(1j * np.arange(-6, 7) * phi, E)
    diff = d.u.values - reg.u.values
    diff -= diff[:, -1:, :].mean()
    assert np.max(np.abs(diff)) < 1e-8


def test_neumann_trace_matches_gradient_near_boundary():
    rng, calc, E = _small_instance(12, K=6)
    phi = np.zeros(13, dtype=complex)
    phi[5], phi[7] = 0.5, 0.5
    sol = solve_neumann(phi, E, radii=np.array([0.5, 0.999, 1.0]))
    f0 = sol.conormal(np.array([0.0]))[0]
    assert np.allclose(f0[:13], phi, atol=1e-10)
    g1 = sol.trace_g1
    for comp, coeffs in ((0, g1.normal[0]), (1, g1.tangential[0])):
        want = synthesize_array(coeffs[None], sol.grad.thetas.size)[0]
        assert np.max(np.abs(sol.grad.values[comp, -1] - want)) < 1e-9
    assert np.max(np.abs(sol.grad.values[:, -2] - sol.grad.values[:, -1])) < 0.05


def test_conjugate_pair_reports():
    K = 8
    sol = solve_dirichlet(_cos(K), random_accretive(np.random.default_rng(13), 1, 2), K=K)
    rep = conjugate_pair(sol)
    assert rep.potential_identity < 1e-10
    assert np.max(rep.remainder_v) < 1e-12 and np.max(rep.remainder_f) < 1e-12
    _, _, E = _small_instance(14, K=6)
    sol = solve_dirichlet(_cos(6), E)
    rep = conjugate_pair(sol)
    assert rep.potential_identity < 1e-10
    assert rep.growth_exponent >= 0.9


def test_boundary_semigroup_identity():
    K = 5
    P = semigroup_Pr(CoefficientField.identity(1), [1.0, 0.5, 0.25], K)
    ks = np.abs(np.arange(-K, K + 1))
    assert np.allclose(P[1.0], np.eye(2 * K + 1), atol=1e-13)
    for r in (0.5, 0.25):
        assert np.max(np.abs(P[r] - np.diag(r**ks))) < 1e-12
    with pytest.raises(ValueError):
        semigroup_Pr(CoefficientField.identity(1), [1.5], K)


@given(seeds)
@settings(max_examples=5, deadline=None)
def test_boundary_semigroup_hermitean(seed):
    A1 = random_accretive(np.random.default_rng(seed), 1, 2, hermitean=True)
    P = semigroup_Pr(A1, [0.5, 0.25], 8)
    assert np.linalg.norm(P[0.5] @ P[0.5] - P[0.25], 2) < 1e-7


@given(seeds, st.sampled_from([1, 2]))
@settings(max_examples=10, deadline=None)
def test_rellich_identity(seed, m):
    rng = np.random.default_rng(seed)
    B0 = hat_transform(random_accretive(rng, m, 2, hermitean=True), 6)
    Ep = Calculus(B0, 0.0, 6).hardy()[0]
    h = BoundarySection.from_vector(m, 6, Ep @ project_H(random_section(rng, m, 6)).vector)
    assert rellich_residual(B0, h) < 1e-9
