"""Serialization: flat JSON configs, coefficient/section JSON and versioned CSV tables."""

from __future__ import annotations

import hashlib
import json
from pathlib import Path

import numpy as np

from . import __version__
from .coefficients import CoefficientField
from .fields import BoundarySection, PolarGridFunction


class ConfigError(ValueError):
    """A malformed configuration file; the message names the line or field."""


def load_config(path: str | Path) -> dict:
    """Read a flat JSON object (values may be scalars or lists, not objects)."""
    text = Path(path).read_text()
    try:
        cfg = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: line {exc.lineno}, column {exc.colno}: {exc.msg}") from None
    if not isinstance(cfg, dict):
        raise ConfigError(f"{path}: top level must be a JSON object")
    for key, val in cfg.items():
        if isinstance(val, dict):
            raise ConfigError(f"{path}: field {key!r} is nested; configs are flat")
        if key.endswith("tol") and not (isinstance(val, (int, float)) and val > 0):
            raise ConfigError(f"{path}: field {key!r} must be a positive number")
    return cfg


def config_hash(cfg: dict) -> str:
    """First 16 hex digits of the SHA-256 of the canonical JSON encoding."""
    blob = json.dumps(cfg, sort_keys=True, separators=(",", ":"), default=str)
    return hashlib.sha256(blob.encode()).hexdigest()[:16]


def _complex_pairs(a: np.ndarray) -> list:
    return np.stack([a.real, a.imag], axis=-1).tolist()


def _from_pairs(x) -> np.ndarray:
    a = np.asarray(x, dtype=float)
    return a[..., 0] + 1j * a[..., 1]


def coefficient_to_json(A: CoefficientField) -> dict:
    return {"kind": "coefficient", "m": A.m, "K": A.K, "entries": _complex_pairs(A.entries)}


def coefficient_from_json(d: dict) -> CoefficientField:
    """Fourier entries (``"entries"``) or a constant matrix (``"matrix"``, real or [re, im] pairs)."""
    if "matrix" in d:
        mat = np.asarray(d["matrix"])
        mat = _from_pairs(mat) if mat.ndim == 3 else mat.astype(complex)
        return CoefficientField.constant(mat, int(d.get("K", 0)))
    try:
        return CoefficientField(int(d["m"]), int(d["K"]), _from_pairs(d["entries"]))
    except KeyError as exc:
        raise ConfigError(f"coefficient JSON is missing field {exc.args[0]!r}") from None


def section_to_json(f: BoundarySection) -> dict:
    return {"kind": "section", "m": f.m, "K": f.K, "coeffs": _complex_pairs(f.coeffs)}


def section_from_json(d: dict) -> BoundarySection:
    try:
        return BoundarySection(int(d["m"]), int(d["K"]), _from_pairs(d["coeffs"]))
    except KeyError as exc:
        raise ConfigError(f"section JSON is missing field {exc.args[0]!r}") from None


def read_json(path: str | Path) -> dict:
    try:
        return json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: line {exc.lineno}: {exc.msg}") from None


def write_json(path: str | Path, payload: dict, cfg_hash: str) -> None:
    out = {"version": __version__, "config_hash": cfg_hash, **payload}
    Path(path).write_text(json.dumps(out, indent=2, sort_keys=True, default=_jsonable) + "\n")


def _jsonable(x):
    if isinstance(x, np.ndarray):
        return x.tolist()
    if isinstance(x, (np.floating, np.integer)):
        return x.item()
    if isinstance(x, complex):
        return [x.real, x.imag]
    return str(x)


def _fmt(x: float) -> str:
    return f"{x:.17g}"


def write_csv(path: str | Path, header: list[str], rows: np.ndarray, cfg_hash: str) -> None:
    """CSV with a ``# config_hash=... version=...`` first line and 17 significant digits."""
    rows = np.asarray(rows, dtype=float)
    lines = [f"# config_hash={cfg_hash} version={__version__}", ",".join(header)]
    lines += [",".join(_fmt(v) for v in row) for row in rows]
    with open(path, "w", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")


def read_csv(path: str | Path) -> tuple[dict, list[str], np.ndarray]:
    with open(path) as fh:
        meta_line = fh.readline().lstrip("# ").strip()
        header = fh.readline().strip().split(",")
        data = np.loadtxt(fh, delimiter=",", ndmin=2)
    meta = dict(item.split("=", 1) for item in meta_line.split())
    return meta, header, data


def grid_rows(F: PolarGridFunction, component: int = 0) -> tuple[list[str], np.ndarray]:
    """Long-format table ``r, theta, re, im`` of one component."""
    R, T = np.meshgrid(F.radii, F.thetas, indexing="ij")
    v = F.values[component]
    return ["r", "theta", "re", "im"], np.column_stack([R.ravel(), T.ravel(), v.real.ravel(), v.imag.ravel()])
