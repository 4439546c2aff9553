"""Acceptance criteria, each at its stated tolerance and time budget.

Every test prints one ``PASS``/``FAIL`` line with the observed value.
"""

import time

import numpy as np
import pytest

from conormal.calculus import Calculus, anticommutator_residual, intertwine_check, square_function_ratios
from conormal.coefficients import CoefficientField, Discrepancy, hat_transform, random_accretive
from conormal.fdoracle import fd_oracle, relative_l2
from conormal.fields import BoundarySection, PolarGridFunction, project_H, random_section
from conormal.norms import nt_estimate
from conormal.solver import (
    IntegralOperator,
    duality_residual,
    rellich_residual,
    semigroup_Pr,
    solve_dirichlet,
)
from conormal.timegrid import TimeGrid


@pytest.fixture
def report(capsys):
    t0 = time.perf_counter()

    def emit(name: str, ok: bool, value: float, tol: float, budget: float) -> float:
        elapsed = time.perf_counter() - t0
        ok = ok and elapsed < budget
        with capsys.disabled():
            print(f"\n{'PASS' if ok else 'FAIL'} {name}: value={value:.3e} tol={tol:.1e} "
                  f"time={elapsed:.1f}s budget={budget:g}s")
        return elapsed

    return emit


def _cos(K):
    phi = np.zeros(2 * K + 1, dtype=complex)
    phi[K - 1] = phi[K + 1] = 0.5
    return phi


def _cutoff(eps):
    # cell average of eps * 1_{t < 1}
    return lambda a, b: eps * max(0.0, min(b, 1.0) - a) / (b - a)


def test_01_hat_involution(report):
    rng = np.random.default_rng(1)
    worst = 0.0
    for i in range(50):
        m, K = 1 + i % 2, int(rng.integers(1, 9))
        A = random_accretive(rng, m, K)
        worst = max(worst, hat_transform(hat_transform(A, tol=1e-14), K).max_entry_error(A))
    elapsed = report("hat_involution", worst < 1e-11, worst, 1e-11, 5)
    assert worst < 1e-11 and elapsed < 5


def test_02_identity_dirichlet_baseline(report):
    K = 16
    sol = solve_dirichlet(_cos(K), CoefficientField.identity(1), K=K)
    r, th = sol.u.radii[:, None], sol.u.thetas[None, :]
    eu = np.max(np.abs(sol.u.values[0] - r * np.cos(th)))
    cv = sol.conjugate.values[0] + r * np.sin(th)
    ec = np.max(np.abs(cv - cv.mean()))
    err = max(eu, ec)
    elapsed = report("identity_dirichlet_baseline", err < 1e-10, err, 1e-10, 5)
    assert err < 1e-10 and elapsed < 5


def test_03_fd_oracle_equivalence(report):
    def af(th):
        z = np.zeros((th.size, 2, 2))
        z[:, 0, 0] = 1 + 0.3 * np.cos(th)
        z[:, 1, 1] = 1
        return z

    A = CoefficientField.from_function(af, 1, 1)
    K = 24
    errs = []
    for n_r, n_t in ((64, 128), (128, 256)):
        U = fd_oracle(A, _cos(K), n_r, n_t)
        V = solve_dirichlet(_cos(K), A, K=K, radii=U.radii, n_theta=n_t).u
        errs.append(relative_l2(U, PolarGridFunction(V.radii, V.thetas, V.values)))
    ok = errs[1] < 5e-3 and errs[1] < errs[0]
    elapsed = report("fd_oracle_equivalence", ok, errs[1], 5e-3, 60)
    assert ok and elapsed < 60


def test_04_square_function_two_sided(report):
    rng = np.random.default_rng(4)
    worst = 0.0
    for _ in range(20):
        B0 = random_accretive(rng, 1, 2)
        for sigma in (0.0, 1.0):
            rep = [square_function_ratios(Calculus(B0, sigma, K)) for K in (8, 16)]
            assert all(np.isfinite(r.constant) and r.lower > 0 for r in rep)
            worst = max(worst, abs(rep[1].constant - rep[0].constant) / rep[0].constant)
    elapsed = report("square_function_constant_change", worst < 0.10, worst, 0.10, 120)
    assert worst < 0.10 and elapsed < 120


def test_05_intertwining_and_duality(report):
    rng = np.random.default_rng(5)
    grid = TimeGrid.geometric(t_min=1e-3, t_max=30.0)
    w_int = w_dual = 0.0
    for _ in range(3):
        B0 = random_accretive(rng, 1, 3)
        for sigma in (0.0, 1.0):
            w_int = max(w_int, intertwine_check(Calculus(B0, sigma, 6)))
        E = Discrepancy.from_profile(hat_transform(B0, 6), grid, _cutoff(0.1), random_accretive(rng, 1, 2))
        w_dual = max(w_dual, duality_residual(E))
    ok = w_int < 1e-10 and w_dual < 1e-7
    elapsed = report("intertwining", w_int < 1e-10, w_int, 1e-10, 60)
    report("duality", w_dual < 1e-7, w_dual, 1e-7, 60)
    assert ok and elapsed < 60


def test_06_rellich_identity(report):
    rng = np.random.default_rng(6)
    worst = 0.0
    for i in range(20):
        m, K = 1 + i % 2, 6
        # hat of a Hermitean coefficient: N B0 is Hermitean
        B0 = hat_transform(random_accretive(rng, m, 3, hermitean=True), K)
        Ep = Calculus(B0, 0.0, K).hardy()[0]
        h = BoundarySection.from_vector(m, K, Ep @ project_H(random_section(rng, m, K)).vector)
        worst = max(worst, rellich_residual(B0, h))
    elapsed = report("rellich_identity", worst < 1e-9, worst, 1e-9, 30)
    assert worst < 1e-9 and elapsed < 30


def test_07_block_anticommutator(report):
    rng = np.random.default_rng(7)
    worst = max(anticommutator_residual(random_accretive(rng, m, 3, block=True), 1.0, 8) for m in (1, 2, 1, 2))
    elapsed = report("block_anticommutator", worst < 1e-8, worst, 1e-8, 30)
    assert worst < 1e-8 and elapsed < 30


def test_08_integral_equation(report):
    rng = np.random.default_rng(8)
    K = 6
    B0 = hat_transform(random_accretive(rng, 1, 3), K)
    calc = Calculus(B0, 0.0, K)
    fixed = random_accretive(rng, 1, 2)
    base = Discrepancy.from_profile(B0, TimeGrid.geometric(t_min=1e-3, t_max=30.0), _cutoff(1.0), fixed)
    eps = 1.0
    op = IntegralOperator(calc, base)
    while op.spectral_radius() >= 0.5:
        eps *= 0.5
        op = IntegralOperator(calc, base.scaled(eps))
    h = calc.hardy()[0] @ project_H(random_section(rng, 1, K)).vector
    F0 = op.semigroup_cells(h)
    x_it, r_it = op.solve(F0, "iterate", tol=1e-13)
    x_de, r_de = op.solve(F0, "dense")
    agree = np.linalg.norm(x_it - x_de) / np.linalg.norm(x_de)
    resid = max(r_it.residual, r_de.residual)
    ok = agree < 1e-9 and resid < 1e-9
    elapsed = report("integral_equation_agreement", agree < 1e-9, agree, 1e-9, 60)
    report("integral_equation_residual", resid < 1e-9, resid, 1e-9, 60)
    assert ok and elapsed < 60


def test_09_boundary_semigroup(report):
    rng = np.random.default_rng(9)
    worst_law = 0.0
    for _ in range(5):
        P = semigroup_Pr(random_accretive(rng, 1, 3, hermitean=True), [0.25, 0.5], 8)
        worst_law = max(worst_law, np.linalg.norm(P[0.5] @ P[0.5] - P[0.25], 2))
    K = 8
    ks = np.abs(np.arange(-K, K + 1))
    radii = [0.9, 0.5, 0.25]
    P = semigroup_Pr(CoefficientField.identity(1), radii, K)
    worst_id = max(np.max(np.abs(P[r] - np.diag(float(r) ** ks))) for r in radii)
    ok = worst_law < 1e-7 and worst_id < 1e-12
    elapsed = report("semigroup_law", worst_law < 1e-7, worst_law, 1e-7, 30)
    report("semigroup_identity_modes", worst_id < 1e-12, worst_id, 1e-12, 30)
    assert ok and elapsed < 30


def _nt_constants(K, q, n_theta):
    rng = np.random.default_rng(10)
    grid = TimeGrid.geometric(t_min=1e-3, t_max=30.0, q=q)
    out = []
    for _ in range(10):
        B0 = hat_transform(random_accretive(rng, 1, 3, strength=0.3), K)
        E = Discrepancy.from_profile(B0, grid, lambda a, b: 0.1 * (min(b, 1.0) ** 2 - min(a, 1.0) ** 2) / (2 * (b - a)),
                                     random_accretive(rng, 1, 2, strength=0.5))
        phi = np.zeros(2 * K + 1, dtype=complex)
        c = rng.standard_normal(7) + 1j * rng.standard_normal(7)
        phi[K - 3 : K + 4] = 0.5 * (c + c[::-1].conj())
        out.append(nt_estimate(solve_dirichlet(phi, E), n_theta=n_theta).constant)
    return np.array(out)


def test_10_nt_apriori_constant(report):
    coarse = _nt_constants(8, 2.0**-0.25, 128)
    fine = _nt_constants(16, 2.0**-0.5, 256)
    finite = bool(np.all(np.isfinite(coarse)) and np.all(np.isfinite(fine)))
    change = float(np.max(np.abs(fine - coarse) / coarse))
    ok = finite and change < 0.15
    elapsed = report("nt_apriori_constant_change", ok, change, 0.15, 120)
    assert ok and elapsed < 120
