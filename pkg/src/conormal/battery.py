"""Identity battery: runs the invariants of every module and records a ledger.

Each check returns observed values; the ledger stores the value, the
tolerance it was held to, pass/fail and the seed needed to reproduce it.
"""

from __future__ import annotations

import time
import traceback
from dataclasses import asdict, dataclass, field
from typing import Callable

import numpy as np

from .calculus import (
    Calculus,
    abs_,
    anticommutator_residual,
    exp_abs,
    intertwine_check,
    sgn,
    similarity_residual,
    square_function_ratios,
)
from .coefficients import (
    CoefficientField,
    Discrepancy,
    hat_transform,
    random_accretive,
)
from .fdoracle import fd_oracle, relative_l2
from .fields import BoundarySection, PolarGridFunction, project_H, random_section
from .norms import (
    local_l2_sup,
    nt_estimate,
    nt_maximal,
    reverse_holder,
    trace_rate,
    trajectory_sampler,
    y_x_norms,
)
from .operators import h_index
from .solver import (
    duality_residual,
    rellich_residual,
    sa_decomposition_residual,
    semigroup_Pr,
    semigroup_trajectory,
    solve_dirichlet,
)
from .timegrid import TimeGrid

SUITES = ("identities", "norms", "oracle")

DEFAULT_CONFIG = {
    "seed": 0,
    "m": 1,
    "K": 8,
    "samples": 3,
    "eps": 0.1,
}


@dataclass
class LedgerEntry:
    name: str
    value: float
    tol: float
    passed: bool
    seed: int
    kind: str = "upper"  # value must be <= tol ("upper") or >= tol ("lower")
    detail: dict = field(default_factory=dict)
    seconds: float = 0.0


@dataclass
class Ledger:
    suite: str
    config: dict
    entries: list[LedgerEntry]

    @property
    def failures(self) -> list[LedgerEntry]:
        return [e for e in self.entries if not e.passed]

    def to_dict(self) -> dict:
        return {
            "suite": self.suite,
            "config": self.config,
            "n_failures": len(self.failures),
            "entries": [asdict(e) for e in self.entries],
        }


def _entry(name: str, fn: Callable[[], tuple[float, dict]], tol: float, seed: int, kind: str = "upper") -> LedgerEntry:
    t0 = time.perf_counter()
    try:
        value, detail = fn()
    except Exception as exc:  # a crashing check is a failed check
        return LedgerEntry(name, float("nan"), tol, False, seed, kind,
                           {"error": repr(exc), "trace": traceback.format_exc(limit=3)}, time.perf_counter() - t0)
    ok = bool(np.isfinite(value) and (value <= tol if kind == "upper" else value >= tol))
    return LedgerEntry(name, float(value), tol, ok, seed, kind, detail, time.perf_counter() - t0)


def _smooth_radial_problem(rng: np.random.Generator, K: int, eps: float, grid: TimeGrid):
    A1 = random_accretive(rng, 1, min(3, K), strength=0.3)
    Ep = random_accretive(rng, 1, min(2, K), strength=0.5)
    B0 = hat_transform(A1, K)

    def ramp(a: float, b: float) -> float:
        # average of eps * t on [a, b] cut at t = 1
        return eps * (min(b, 1.0) ** 2 - min(a, 1.0) ** 2) / (2 * (b - a))

    E = Discrepancy.from_profile(B0, grid, ramp, Ep)
    phi = np.zeros(2 * K + 1, dtype=complex)
    c = rng.standard_normal(7) + 1j * rng.standard_normal(7)
    phi[K - 3 : K + 4] = 0.5 * (c + c[::-1].conj())
    return E, phi


# ---------------------------------------------------------------------------
# suites


def _identities(cfg: dict) -> list[LedgerEntry]:
    seed, m, K = int(cfg["seed"]), int(cfg["m"]), int(cfg["K"])
    rng = np.random.default_rng(seed)
    out = []
    for s in range(int(cfg["samples"])):
        A = random_accretive(rng, m, K)
        out.append(_entry(f"hat_involution[{s}]",
                          lambda A=A: (hat_transform(hat_transform(A, tol=1e-14), K).max_entry_error(A), {}), 1e-11, seed))
        for sigma in (0.0, 1.0):
            calc = Calculus(A, sigma, K)
            idx = h_index(m, K)

            def proj(calc=calc) -> tuple[float, dict]:
                Ep, Em, Etp, Etm = calc.hardy()
                eye = np.eye(calc.dim)
                return max(np.linalg.norm(Ep @ Ep - Ep, 2), np.linalg.norm(Ep @ Em, 2),
                           np.linalg.norm(Ep + Em - eye, 2), np.linalg.norm(Etp + Etm - eye, 2)), {}

            def homomorphism(calc=calc, idx=idx) -> tuple[float, dict]:
                cols = idx if calc.sigma == 0 else slice(None)
                r = calc.matrix(sgn()) @ calc.matrix(abs_()) - calc.D0
                return float(np.linalg.norm(r[:, cols], 2)), {}

            def semigroup(calc=calc) -> tuple[float, dict]:
                a, b = calc.matrix(exp_abs(0.3)), calc.matrix(exp_abs(0.5))
                return float(np.linalg.norm(a @ b - calc.matrix(exp_abs(0.8)), 2)), {}

            tag = f"[{s},sigma={sigma:g}]"
            out.append(_entry("hardy_projection_algebra" + tag, proj, 1e-10, seed))
            out.append(_entry("intertwining" + tag, lambda calc=calc: (intertwine_check(calc), {}), 1e-10, seed))
            out.append(_entry("sgn_abs_equals_D0" + tag, homomorphism, 1e-9, seed))
            out.append(_entry("semigroup_law" + tag, semigroup, 1e-10, seed))
            out.append(_entry("SA_decomposition" + tag, lambda calc=calc: (sa_decomposition_residual(calc), {}),
                              1e-9, seed))
            if sigma == 0.0:
                out.append(_entry("similarity" + tag, lambda calc=calc: (similarity_residual(calc, sgn()), {}),
                                  1e-9, seed))

        # hat(A) of a Hermitean A: N B0 is then Hermitean
        Bh = hat_transform(random_accretive(rng, m, min(3, K), hermitean=True), K)

        def rellich(Bh=Bh) -> tuple[float, dict]:
            Ep = Calculus(Bh, 0.0, K).hardy()[0]
            worst = 0.0
            for _ in range(5):
                h = Ep @ project_H(random_section(rng, m, K)).vector
                worst = max(worst, rellich_residual(Bh, BoundarySection.from_vector(m, K, h)))
            return worst, {}

        out.append(_entry(f"rellich_hermitean[{s}]", rellich, 1e-9, seed))
        Ab = random_accretive(rng, m, K, block=True)
        out.append(_entry(f"block_anticommutator[{s}]", lambda Ab=Ab: (anticommutator_residual(Ab, 1.0, K), {}),
                          1e-8, seed))

        grid = TimeGrid.geometric(t_min=1e-3, t_max=30.0)
        E = Discrepancy.from_profile(
            A, grid, lambda a, b: float(cfg["eps"]) * max(0.0, min(b, 1.0) - a) / (b - a),
            random_accretive(rng, m, min(2, K)),
        )
        out.append(_entry(f"duality[{s}]", lambda E=E: (duality_residual(E), {}), 1e-7, seed))

    def baseline() -> tuple[float, dict]:
        Kb = 16
        phi = np.zeros(2 * Kb + 1, dtype=complex)
        phi[Kb - 1] = phi[Kb + 1] = 0.5
        sol = solve_dirichlet(phi, CoefficientField.identity(1), K=Kb)
        r, th = sol.u.radii[:, None], sol.u.thetas[None, :]
        eu = np.max(np.abs(sol.u.values[0] - r * np.cos(th)))
        cv = sol.conjugate.values[0] + r * np.sin(th)
        ec = np.max(np.abs(cv - cv.mean()))
        return max(eu, ec), {"u_error": float(eu), "conjugate_error": float(ec)}

    out.append(_entry("identity_dirichlet_baseline", baseline, 1e-10, seed))

    def pr() -> tuple[float, dict]:
        A1 = random_accretive(rng, 1, K, hermitean=True)
        P = semigroup_Pr(A1, [0.25, 0.5], K)
        return float(np.linalg.norm(P[0.5] @ P[0.5] - P[0.25], 2)), {}

    out.append(_entry("boundary_semigroup_Pr", pr, 1e-7, seed))
    return out


def _norms(cfg: dict) -> list[LedgerEntry]:
    seed, K = int(cfg["seed"]), int(cfg["K"])
    eps = float(cfg["eps"])
    out = []

    def constants(Kr: int, q: float) -> tuple[np.ndarray, list]:
        rng = np.random.default_rng(seed)
        grid = TimeGrid.geometric(t_min=1e-3, t_max=30.0, q=q)
        cs, sols = [], []
        for _ in range(int(cfg["samples"])):
            E, phi = _smooth_radial_problem(rng, Kr, eps, grid)
            sol = solve_dirichlet(phi, E)
            cs.append(nt_estimate(sol).constant)
            sols.append(sol)
        return np.array(cs), sols

    coarse, sols = constants(K, 2.0**-0.25)
    fine, _ = constants(2 * K, 2.0**-0.5)

    def nt_stability() -> tuple[float, dict]:
        change = abs(fine.max() - coarse.max()) / coarse.max()
        return float(change), {"C_coarse": float(coarse.max()), "C_fine": float(fine.max())}

    out.append(_entry("nt_apriori_constant_refinement_change", nt_stability, 0.15, seed))
    out.append(_entry("trace_rate_constant", lambda: (max(trace_rate(s) for s in sols), {}), 1e3, seed))

    def rh() -> tuple[float, dict]:
        radii = np.linspace(0.01, 0.95, 80)
        s = solve_dirichlet(sols[0].trace_u1.normal.reshape(-1), random_accretive(np.random.default_rng(seed), 1, 3),
                            K=K, radii=radii, n_theta=128)
        return reverse_holder(s.grad, p=2.5), {"p": 2.5}

    out.append(_entry("reverse_holder_constant", rh, 10.0, seed))

    def chain() -> tuple[float, dict]:
        rng = np.random.default_rng(seed)
        calc = Calculus(random_accretive(rng, 1, K), 0.0, K)
        h = calc.hardy()[0] @ random_section(rng, 1, K, decay=1.0).vector
        traj = semigroup_trajectory(BoundarySection.from_vector(1, K, h), calc, TimeGrid.geometric())
        samp = trajectory_sampler(traj)
        rep = y_x_norms(samp, 1, K)
        lower = local_l2_sup(samp) / nt_maximal(samp, 1, K).norm ** 2
        return max(rep.ratios.values()), {**rep.ratios, "local_l2_over_nt": lower}

    out.append(_entry("embedding_chain_ratio", chain, 1e3, seed))

    def square_fn() -> tuple[float, dict]:
        rng = np.random.default_rng(seed)
        A = random_accretive(rng, 1, 2)
        cs = [square_function_ratios(Calculus(hat_transform(A, k), 0.0, k)).constant for k in (K, 2 * K)]
        return abs(cs[1] - cs[0]) / cs[0], {"C": cs}

    out.append(_entry("square_function_constant_refinement_change", square_fn, 0.10, seed))

    def carleson_monotone() -> tuple[float, dict]:
        rng = np.random.default_rng(seed)
        E, _ = _smooth_radial_problem(rng, K, eps, TimeGrid.geometric())
        taus = [0.1, 0.3, 0.6, 1.0]
        vals = [E.carleson_norm(t) for t in taus]
        return float(max(0.0, -np.min(np.diff(vals)))), {"taus": taus, "norms": vals}

    out.append(_entry("carleson_truncation_monotone", carleson_monotone, 0.0, seed))
    return out


def _oracle(cfg: dict) -> list[LedgerEntry]:
    seed = int(cfg["seed"])

    def run() -> tuple[float, dict]:
        def af(th: np.ndarray) -> np.ndarray:
            z = np.zeros((th.size, 2, 2))
            z[:, 0, 0] = 1 + 0.3 * np.cos(th)
            z[:, 1, 1] = 1
            return z

        A = CoefficientField.from_function(af, 1, 1)
        K = 24
        phi = np.zeros(2 * K + 1, dtype=complex)
        phi[K - 1] = phi[K + 1] = 0.5
        errs = []
        for n in (64, 128):
            U = fd_oracle(A, phi, n, 2 * n)
            sol = solve_dirichlet(phi, A, K=K, radii=U.radii, n_theta=2 * n)
            V = PolarGridFunction(U.radii, U.thetas, sol.u.values)
            errs.append(relative_l2(U, V))
        if errs[1] >= errs[0]:
            return float("inf"), {"errors": errs}
        return errs[1], {"errors": errs}

    return [_entry("fd_oracle_relative_l2", run, 5e-3, seed)]


def identity_battery(config: dict | None = None, suite: str = "identities") -> Ledger:
    """Run one suite and return its ledger.

    ``config`` is a flat dict; missing keys take the values in ``DEFAULT_CONFIG``.
    """
    cfg = {**DEFAULT_CONFIG, **(config or {})}
    unknown = set(cfg) - set(DEFAULT_CONFIG)
    if unknown:
        raise ValueError(f"unknown config fields: {sorted(unknown)}")
    if suite not in SUITES:
        raise ValueError(f"unknown suite {suite!r}; choose from {SUITES}")
    runner = {"identities": _identities, "norms": _norms, "oracle": _oracle}[suite]
    return Ledger(suite, cfg, runner(cfg))
