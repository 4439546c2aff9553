import json

import numpy as np
import pytest

from conormal.battery import Ledger, identity_battery
from conormal.cli import run
from conormal.io import ConfigError, coefficient_from_json, config_hash, load_config, read_csv


def test_identity_battery_small_config():
    ledger = identity_battery({"K": 4, "samples": 1})
    assert isinstance(ledger, Ledger)
    assert ledger.entries and not ledger.failures
    d = ledger.to_dict()
    assert d["suite"] == "identities" and d["config"]["K"] == 4


def test_battery_rejects_bad_input():
    with pytest.raises(ValueError, match="unknown"):
        identity_battery({"bogus": 1})
    with pytest.raises(ValueError):
        identity_battery(suite="nonsense")


def test_oracle_suite():
    assert not identity_battery(suite="oracle").failures


def test_config_loading(tmp_path):
    p = tmp_path / "c.json"
    p.write_text('{"K": 4,\n "tol": 1e-3}')
    assert load_config(p) == {"K": 4, "tol": 1e-3}
    p.write_text('{"K": 4,\n "x": }')
    with pytest.raises(ConfigError, match="line 2"):
        load_config(p)
    p.write_text('{"a": {"b": 1}}')
    with pytest.raises(ConfigError, match="nested"):
        load_config(p)
    p.write_text('{"tol": -1}')
    with pytest.raises(ConfigError, match="positive"):
        load_config(p)
    assert config_hash({"a": 1, "b": 2}) == config_hash({"b": 2, "a": 1})


def test_cli_transform_identity(tmp_path):
    assert run(["transform", "--out", str(tmp_path), "--K", "2"]) == 0
    d = json.loads((tmp_path / "coefficient.json").read_text())
    B = coefficient_from_json(d)
    assert np.allclose(B.entries[:, :, B.K], np.eye(2)) and np.allclose(np.delete(B.entries, B.K, axis=2), 0)
    assert d["version"] and len(d["config_hash"]) == 16


def test_cli_spectrum_identity(tmp_path):
    assert run(["spectrum", "--out", str(tmp_path), "--K", "3", "--sigma", "1"]) == 0
    _, header, data = read_csv(tmp_path / "spectrum.csv")
    mags = np.sort(np.abs(data[:, 0] + 1j * data[:, 1]))
    assert mags[-1] == pytest.approx(np.sqrt(10), rel=1e-12)


def test_cli_solve_matches_closed_form(tmp_path):
    assert run(["solve", "--out", str(tmp_path), "--K", "4", "--n-theta", "16", "--n-radii", "5"]) == 0
    meta, header, data = read_csv(tmp_path / "u_0.csv")
    assert header == ["r", "theta", "re", "im"]
    assert len(meta["config_hash"]) == 16
    r, th, re = data[:, 0], data[:, 1], data[:, 2]
    assert np.max(np.abs(re - r * np.cos(th))) < 1e-12


def test_cli_deterministic(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    for out in (a, b):
        assert run(["solve", "--out", str(out), "--K", "4", "--n-theta", "16", "--n-radii", "4"]) == 0
    for name in ("u_0.csv", "grad_0.csv", "solution.json"):
        assert (a / name).read_bytes() == (b / name).read_bytes()


def test_cli_modes_datum_and_neumann(tmp_path):
    datum = tmp_path / "d.json"
    datum.write_text(json.dumps({"kind": "modes", "modes": {"2": [0.5, 0], "-2": [0.5, 0]}}))
    assert run(["solve", "--out", str(tmp_path), "--problem", "neumann", "--datum", str(datum),
                "--K", "4", "--n-theta", "16", "--n-radii", "4"]) == 0
    _, _, data = read_csv(tmp_path / "u_0.csv")
    r, th, re = data[:, 0], data[:, 1], data[:, 2]
    # u_r = cos 2 theta at r = 1 gives u = r^2 cos(2 theta) / 2
    assert np.max(np.abs(re - 0.5 * r**2 * np.cos(2 * th))) < 1e-12


def test_cli_verify_and_errors(tmp_path, capsys):
    cfg = tmp_path / "cfg.json"
    cfg.write_text('{"K": 4, "samples": 1}')
    assert run(["verify", "--out", str(tmp_path), "--config", str(cfg)]) == 0
    out = capsys.readouterr().out
    assert out.count("PASS") > 5 and "FAIL" not in out
    cfg.write_text('{"nope": 1}')
    assert run(["verify", "--out", str(tmp_path), "--config", str(cfg)]) == 2
    cfg.write_text('{"K": ')
    assert run(["solve", "--out", str(tmp_path), "--config", str(cfg)]) == 2
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"kind": "modes", "modes": {"1": [1.0, 0.0]}}))
    assert run(["solve", "--out", str(tmp_path), "--problem", "neumann", "--datum", str(bad),
                "--K", "4"]) == 0
    bad.write_text(json.dumps({"kind": "modes", "modes": {"0": [1.0, 0.0]}}))
    assert run(["solve", "--out", str(tmp_path), "--problem", "neumann", "--datum", str(bad), "--K", "4"]) == 3
    assert json.loads((tmp_path / "error.json").read_text())["error"] == "ValueError"


def test_cli_compare_oracle(tmp_path):
    assert run(["compare-oracle", "--out", str(tmp_path), "--K", "12", "--n-r", "32", "--n-theta", "64"]) == 0
    _, _, data = read_csv(tmp_path / "oracle.csv")
    assert data[1, 2] < data[0, 2] < 1e-2
