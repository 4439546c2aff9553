"""Command-line front end: ``conormal {transform,spectrum,solve,verify,compare-oracle}``.

``CONORMAL_THREADS`` sets the BLAS thread count; it is read before numpy loads.
"""

from __future__ import annotations

import os

if os.environ.get("CONORMAL_THREADS"):
    for _var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
        os.environ.setdefault(_var, os.environ["CONORMAL_THREADS"])

import argparse  # noqa: E402
import json  # noqa: E402
import logging  # noqa: E402
import sys  # noqa: E402
from pathlib import Path  # noqa: E402

import numpy as np  # noqa: E402

from . import __version__  # noqa: E402
from .battery import SUITES, identity_battery  # noqa: E402
from .calculus import Calculus  # noqa: E402
from .coefficients import (  # noqa: E402
    CoefficientField,
    accretivity_garding,
    conjugate_coefficients,
    hat_transform,
    pointwise_inverse,
)
from .fdoracle import fd_oracle, relative_l2  # noqa: E402
from .fields import PolarGridFunction  # noqa: E402
from .io import (  # noqa: E402
    ConfigError,
    coefficient_from_json,
    coefficient_to_json,
    config_hash,
    grid_rows,
    load_config,
    read_json,
    section_from_json,
    write_csv,
    write_json,
)
from .operators import assemble_D0, spectrum  # noqa: E402
from .solver import solve_dirichlet, solve_neumann, solve_regularity  # noqa: E402

log = logging.getLogger("conormal")

SOLVERS = {"dirichlet": solve_dirichlet, "neumann": solve_neumann, "regularity": solve_regularity}
TRANSFORMS = {"hat": hat_transform, "conjugate": conjugate_coefficients, "inverse": pointwise_inverse}


def _oracle_coefficients() -> CoefficientField:
    def af(th: np.ndarray) -> np.ndarray:
        z = np.zeros((th.size, 2, 2))
        z[:, 0, 0] = 1 + 0.3 * np.cos(th)
        z[:, 1, 1] = 1
        return z

    return CoefficientField.from_function(af, 1, 1)


def _load_coeff(path: str | None, m: int) -> CoefficientField:
    if path is None:
        return CoefficientField.identity(m)
    return coefficient_from_json(read_json(path))


def _load_datum(path: str | None, m: int, K: int) -> np.ndarray:
    """Normal Fourier coefficients ``(m, 2K+1)``; default ``cos(theta)`` in the first component."""
    out = np.zeros((m, 2 * K + 1), dtype=complex)
    if path is None:
        out[0, K - 1] = out[0, K + 1] = 0.5
        return out
    d = read_json(path)
    if d.get("kind") == "section":
        f = section_from_json(d)
        kk = min(K, f.K)
        out[:, K - kk : K + kk + 1] = f.normal[:, f.K - kk : f.K + kk + 1]
        return out
    if d.get("kind") == "modes":
        for key, val in d.get("modes", {}).items():
            k = int(key)
            if abs(k) > K:
                raise ConfigError(f"{path}: mode {k} exceeds K={K}")
            out[int(d.get("component", 0)), K + k] = complex(*val)
        return out
    raise ConfigError(f"{path}: field 'kind' must be 'section' or 'modes'")


def _merged(args: argparse.Namespace, defaults: dict) -> dict:
    cfg = dict(defaults)
    if getattr(args, "config", None):
        file_cfg = load_config(args.config)
        unknown = set(file_cfg) - set(defaults)
        if unknown:
            raise ConfigError(f"{args.config}: unknown field(s) {sorted(unknown)}")
        cfg.update(file_cfg)
    for key in defaults:
        val = getattr(args, key, None)
        if val is not None:
            cfg[key] = val
    return cfg


def _outdir(args: argparse.Namespace) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


# ---------------------------------------------------------------------------
# subcommands


def cmd_transform(args: argparse.Namespace) -> int:
    cfg = _merged(args, {"kind": "hat", "K": None, "m": 1, "tol": 1e-14})
    h = config_hash({**cfg, "coeff": args.coeff})
    log.info("config_hash=%s", h)
    A = _load_coeff(args.coeff, cfg["m"])
    K = A.K if cfg["K"] is None else int(cfg["K"])
    B = TRANSFORMS[cfg["kind"]](A, K, cfg["tol"])
    out = _outdir(args)
    write_json(out / "coefficient.json", {**coefficient_to_json(B), "residual": B.residual}, h)
    return 0


def cmd_spectrum(args: argparse.Namespace) -> int:
    cfg = _merged(args, {"K": 8, "sigma": 0.0, "m": 1})
    h = config_hash({**cfg, "coeff": args.coeff})
    log.info("config_hash=%s", h)
    A = _load_coeff(args.coeff, cfg["m"])
    K = int(cfg["K"])
    B0 = hat_transform(A, K)
    D0, _ = assemble_D0(B0, cfg["sigma"], K)
    rep = spectrum(D0)
    out = _outdir(args)
    ev = rep.eigenvalues
    write_csv(out / "spectrum.csv", ["re", "im"], np.column_stack([ev.real, ev.imag]), h)
    write_json(out / "spectrum.json", {
        "omega": rep.omega, "violations": rep.violations, "min_abs_real": rep.min_abs_real,
        "kappa_garding": accretivity_garding(B0, cfg["sigma"], K),
        "eig_condition": Calculus(B0, cfg["sigma"], K).eig_condition,
    }, h)
    return 0


def cmd_solve(args: argparse.Namespace) -> int:
    cfg = _merged(args, {"problem": "dirichlet", "K": 16, "sigma": 0.0, "m": 1, "n_theta": 64, "n_radii": 31})
    if cfg["problem"] not in SOLVERS:
        raise ConfigError(f"field 'problem' must be one of {sorted(SOLVERS)}")
    h = config_hash({**cfg, "coeff": args.coeff, "datum": args.datum})
    log.info("config_hash=%s", h)
    A = _load_coeff(args.coeff, cfg["m"])
    K = int(cfg["K"])
    phi = _load_datum(args.datum, A.m, K)
    radii = np.exp(-np.linspace(3.0, 0.0, int(cfg["n_radii"])))
    sol = SOLVERS[cfg["problem"]](phi.reshape(-1), A, K=K, sigma=cfg["sigma"], radii=radii,
                                  n_theta=int(cfg["n_theta"]))
    out = _outdir(args)
    for name, F in (("u", sol.u), ("conjugate", sol.conjugate)):
        for c in range(F.components):
            header, rows = grid_rows(F, c)
            write_csv(out / f"{name}_{c}.csv", header, rows, h)
    for c in range(sol.grad.components):
        header, rows = grid_rows(sol.grad, c)
        write_csv(out / f"grad_{c}.csv", header, rows, h)
    write_json(out / "solution.json", {"problem": cfg["problem"], "diagnostics": sol.diagnostics}, h)
    return 0


def cmd_verify(args: argparse.Namespace) -> int:
    cfg = load_config(args.config) if args.config else {}
    h = config_hash({**cfg, "suite": args.suite})
    log.info("config_hash=%s", h)
    try:
        ledger = identity_battery(cfg, args.suite)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    out = _outdir(args)
    write_json(out / f"ledger_{args.suite}.json", ledger.to_dict(), h)
    rows = np.array([[e.value, e.tol, float(e.passed), e.seconds] for e in ledger.entries])
    names = [e.name for e in ledger.entries]
    write_csv(out / f"ledger_{args.suite}.csv", ["index", "value", "tol", "passed", "seconds"],
              np.column_stack([np.arange(len(names)), rows]), h)
    (out / f"ledger_{args.suite}_names.txt").write_text("\n".join(names) + "\n")
    for e in ledger.entries:
        print(f"{'PASS' if e.passed else 'FAIL'} {e.name} value={e.value:.3e} tol={e.tol:.1e} seed={e.seed}")
    return 1 if ledger.failures else 0


def cmd_compare_oracle(args: argparse.Namespace) -> int:
    cfg = _merged(args, {"K": 24, "n_r": 128, "n_theta": 256})
    h = config_hash({**cfg, "coeff": args.coeff, "datum": args.datum})
    log.info("config_hash=%s", h)
    A = _oracle_coefficients() if args.coeff is None else _load_coeff(args.coeff, 1)
    K = int(cfg["K"])
    phi = _load_datum(args.datum, 1, K)[0]
    rows = []
    for scale in (2, 1):
        n_r, n_t = int(cfg["n_r"]) // scale, int(cfg["n_theta"]) // scale
        U = fd_oracle(A, phi, n_r, n_t)
        sol = solve_dirichlet(phi, A, K=K, radii=U.radii, n_theta=n_t)
        rows.append([n_r, n_t, relative_l2(U, PolarGridFunction(U.radii, U.thetas, sol.u.values))])
    out = _outdir(args)
    write_csv(out / "oracle.csv", ["n_r", "n_theta", "relative_l2"], np.array(rows), h)
    for r in rows:
        print(f"{int(r[0])}x{int(r[1])}: relative L2 = {r[2]:.3e}")
    return 0


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="conormal", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=__version__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp: argparse.ArgumentParser, coeff: bool = True) -> None:
        sp.add_argument("--config", help="flat JSON config")
        sp.add_argument("--out", default="out", help="output directory")
        if coeff:
            sp.add_argument("--coeff", help="coefficient JSON (default: identity)")
            sp.add_argument("--K", type=int)
            sp.add_argument("--m", type=int)

    sp = sub.add_parser("transform", help="hat, conjugate or pointwise inverse of coefficients")
    common(sp)
    sp.add_argument("--kind", choices=sorted(TRANSFORMS))
    sp.add_argument("--tol", type=float)
    sp.set_defaults(func=cmd_transform)

    sp = sub.add_parser("spectrum", help="eigenvalues and fitted angle of D0")
    common(sp)
    sp.add_argument("--sigma", type=float)
    sp.set_defaults(func=cmd_spectrum)

    sp = sub.add_parser("solve", help="solve a boundary value problem")
    common(sp)
    sp.add_argument("--problem", choices=sorted(SOLVERS))
    sp.add_argument("--datum", help="datum JSON (default: cos theta)")
    sp.add_argument("--sigma", type=float)
    sp.add_argument("--n-theta", dest="n_theta", type=int)
    sp.add_argument("--n-radii", dest="n_radii", type=int)
    sp.set_defaults(func=cmd_solve)

    sp = sub.add_parser("verify", help="run an identity battery suite")
    common(sp, coeff=False)
    sp.add_argument("--suite", choices=SUITES, default="identities")
    sp.set_defaults(func=cmd_verify)

    sp = sub.add_parser("compare-oracle", help="spectral vs finite-difference Dirichlet solution")
    common(sp)
    sp.add_argument("--datum")
    sp.add_argument("--n-r", dest="n_r", type=int)
    sp.add_argument("--n-theta", dest="n_theta", type=int)
    sp.set_defaults(func=cmd_compare_oracle)
    return p


def run(argv: list[str] | None = None) -> int:
    """Parse ``argv`` and execute; returns the exit status.

    0 success, 1 failed checks, 2 usage or config error, 3 numerical failure.
    """
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(name)s: %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"conormal {args.command}: config error: {exc}", file=sys.stderr)
        return 2
    except (ValueError, np.linalg.LinAlgError, ArithmeticError) as exc:
        err = {"error": type(exc).__name__, "message": str(exc), "module": type(exc).__module__,
               "command": args.command}
        print(json.dumps(err), file=sys.stderr)
        out = getattr(args, "out", None)
        if out:
            Path(out).mkdir(parents=True, exist_ok=True)
            (Path(out) / "error.json").write_text(json.dumps(err, indent=2) + "\n")
        return 3


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
