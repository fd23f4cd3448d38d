import json
import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest

from cbfsim.config import ConfigError, load_config, parse_config, serialize_config
from cbfsim.sampling import default_rng, random_field
from cbfsim.spectral import TorusGrid, h_norm
from cbfsim.storage import read_checkpoint, write_checkpoint
from cbfsim.verify import run_suites

GRID = TorusGrid(d=2, n=16)


def run_cli(*args):
    return subprocess.run(
        [sys.executable, "-m", "cbfsim.cli", *args],
        capture_output=True,
        text=True,
    )


BASE_CONFIG = {
    "grid": {"d": 2, "n": 16},
    "params": {"mu": 1.0, "beta": 1.0, "r": 1.0},
    "stepper": {"dt": 1e-3, "t_end": 0.02, "lam": 0.1, "record_every": 5},
    "potential": {"variant": "none"},
    "forcing": {"kind": "none"},
    "initial": {"kind": "single_mode", "mode": {"k": [0, 1], "component": 0, "amplitude": 1.0}},
    "seed": 0,
    "output_dir": "out",
}


def write_config(tmp_path, overrides=None, **sections):
    data = json.loads(json.dumps(BASE_CONFIG))
    for key, val in (overrides or {}).items():
        data[key] = val
    for key, val in sections.items():
        data[key].update(val)
    path = tmp_path / "config.json"
    path.write_text(json.dumps(data))
    return path


def test_checkpoint_round_trip(tmp_path):
    rng = default_rng(90)
    y = random_field(GRID, rng)
    path = tmp_path / "field.cbf"
    write_checkpoint(path, y, scalars=[0.25])
    back, scalars = read_checkpoint(path)
    assert scalars == [0.25]
    assert np.array_equal(back.coeffs, y.coeffs)  # bit-exact
    assert back.grid.n == GRID.n and back.grid.d == GRID.d


def test_checkpoint_header_layout(tmp_path):
    rng = default_rng(91)
    y = random_field(GRID, rng)
    path = tmp_path / "field.cbf"
    write_checkpoint(path, y, scalars=[1.0, 2.0])
    raw = path.read_bytes()
    assert raw[:4] == b"CBF1"
    import struct

    d, n, m = struct.unpack("<III", raw[4:16])
    assert (d, n, m) == (2, 16, 2)
    assert len(raw) == 16 + 8 * m + 16 * d * n**d
    # lexicographic order: the first pair belongs to k = (-n/2, -n/2)
    re0, im0 = struct.unpack("<dd", raw[16 + 8 * m : 32 + 8 * m])
    assert re0 + 1j * im0 == y.coeffs[0, GRID.n // 2, GRID.n // 2]


def test_checkpoint_rejects_bad_magic(tmp_path):
    path = tmp_path / "bad.cbf"
    path.write_bytes(b"NOPE" + b"\x00" * 64)
    with pytest.raises(ValueError):
        read_checkpoint(path)


def test_config_round_trip_idempotent(tmp_path):
    path = write_config(tmp_path)
    cfg = load_config(path)
    text = serialize_config(cfg)
    cfg2 = parse_config(text)
    assert serialize_config(cfg2) == text


def test_config_field_diagnostics():
    with pytest.raises(ConfigError) as err:
        parse_config(json.dumps({"params": {"mu": -1.0}, "grid": {"n": 7}}))
    msgs = " ".join(err.value.errors)
    assert "params" in msgs and "grid" in msgs


def test_config_rejects_explicit_phi_with_large_dt():
    bad = json.loads(json.dumps(BASE_CONFIG))
    bad["stepper"] = {"dt": 0.2, "t_end": 1.0, "lam": 0.1, "scheme": "imex-explicit-phi"}
    with pytest.raises(ConfigError) as err:
        parse_config(json.dumps(bad))
    assert any("stepper" in e for e in err.value.errors)


def test_config_time_optimal_requires_threshold_regime():
    bad = json.loads(json.dumps(BASE_CONFIG))
    bad["control"] = {"app": "time-optimal", "kappa_c": 1.0}
    bad["params"] = {"mu": 1.0, "beta": 1.0, "r": 2.0}
    with pytest.raises(ConfigError) as err:
        parse_config(json.dumps(bad))
    assert any("time-optimal" in e for e in err.value.errors)


def test_cli_simulate_decay_and_determinism(tmp_path):
    path = write_config(tmp_path, overrides={"output_dir": str(tmp_path / "o1")})
    res = run_cli("simulate", "--config", str(path))
    assert res.returncode == 0, res.stderr
    csv1 = (tmp_path / "o1" / "trajectory.csv").read_bytes()
    summary = (tmp_path / "o1" / "summary.jsonl").read_text()
    rate = (2 * np.pi) ** 2 + 1.0
    exact = np.sqrt(0.5) * np.exp(-rate * 0.02)
    terminal = json.loads(summary)["terminal_h_norm"]
    assert terminal == pytest.approx(exact, rel=1e-3)

    res2 = run_cli("simulate", "--config", str(path), "--out", str(tmp_path / "o2"))
    assert res2.returncode == 0
    csv2 = (tmp_path / "o2" / "trajectory.csv").read_bytes()
    assert csv1 == csv2  # byte-identical reruns
    ck1 = (tmp_path / "o1" / "trajectory_000004.cbf").read_bytes()
    ck2 = (tmp_path / "o2" / "trajectory_000004.cbf").read_bytes()
    assert ck1 == ck2


def test_cli_simulate_resume_matches(tmp_path):
    full_cfg = write_config(tmp_path, overrides={"output_dir": str(tmp_path / "full")})
    assert run_cli("simulate", "--config", str(full_cfg)).returncode == 0

    half = json.loads(full_cfg.read_text())
    half["stepper"]["t_end"] = 0.01
    half["output_dir"] = str(tmp_path / "half")
    half_cfg = tmp_path / "half.json"
    half_cfg.write_text(json.dumps(half))
    assert run_cli("simulate", "--config", str(half_cfg)).returncode == 0

    ckpt = sorted((tmp_path / "half").glob("trajectory_*.cbf"))[-1]
    rest = json.loads(full_cfg.read_text())
    rest["output_dir"] = str(tmp_path / "rest")
    rest_cfg = tmp_path / "rest.json"
    rest_cfg.write_text(json.dumps(rest))
    assert run_cli(
        "simulate", "--config", str(rest_cfg), "--resume", str(ckpt)
    ).returncode == 0

    full_last, _ = read_checkpoint(sorted((tmp_path / "full").glob("trajectory_*.cbf"))[-1])
    rest_last, t_rest = read_checkpoint(sorted((tmp_path / "rest").glob("trajectory_*.cbf"))[-1])
    assert t_rest[0] == pytest.approx(0.02, abs=1e-12)
    assert h_norm(full_last - rest_last) <= 1e-12


def test_cli_simulate_invalid_config_exit_code(tmp_path):
    path = tmp_path / "bad.json"
    path.write_text(json.dumps({"grid": {"n": 7}}))
    res = run_cli("simulate", "--config", str(path))
    assert res.returncode == 2
    assert "config error" in res.stderr


def test_cli_verify_suite_and_unknown(tmp_path):
    res = run_cli("verify", "--suite", "spectral", "--seed", "0")
    assert res.returncode == 0, res.stderr
    lines = [l for l in res.stdout.splitlines() if l.startswith("{")]
    assert all(json.loads(l)["passed"] for l in lines)

    res = run_cli("verify", "--suite", "nonsense")
    assert res.returncode == 2


def test_cli_verify_mutation_self_test():
    res = run_cli("verify", "--suite", "operators", "--mutate", "c-sign")
    assert res.returncode == 1
    failed = [
        json.loads(l)["check_id"]
        for l in res.stdout.splitlines()
        if l.startswith("{") and not json.loads(l)["passed"]
    ]
    assert "absorption-monotone" in failed


def test_cli_resolvent_zero_forcing(tmp_path):
    path = write_config(
        tmp_path,
        overrides={"output_dir": str(tmp_path / "res"), "resolvent": {"kappa": 1.0}},
        params={"r": 5.0},
    )
    res = run_cli("resolvent", "--config", str(path))
    assert res.returncode == 0, res.stderr
    field, _ = read_checkpoint(tmp_path / "res" / "stationary.cbf")
    assert h_norm(field) == 0.0


def test_cli_steady_state_and_control_stabilize(tmp_path):
    cfg = json.loads(json.dumps(BASE_CONFIG))
    cfg["params"] = {"mu": 1.0, "beta": 1.0, "r": 5.0}
    cfg["forcing"] = {
        "kind": "constant",
        "mode": {"k": [0, 1], "component": 0, "amplitude": 0.5},
    }
    cfg["output_dir"] = str(tmp_path / "ss")
    path = tmp_path / "ss.json"
    path.write_text(json.dumps(cfg))
    res = run_cli("steady-state", "--config", str(path))
    assert res.returncode == 0, res.stderr

    ctl = json.loads(json.dumps(BASE_CONFIG))
    ctl["params"] = {"mu": 1.0, "beta": 1.0, "r": 5.0}
    ctl["control"] = {"app": "stabilize", "theta": 1.0, "varpi": 1.0}
    ctl["equilibrium"] = {"kind": "file", "file": str(tmp_path / "ss" / "steady_state.cbf")}
    ctl["initial"] = {"kind": "file", "file": str(tmp_path / "ss" / "steady_state.cbf")}
    ctl["output_dir"] = str(tmp_path / "ctl")
    cpath = tmp_path / "ctl.json"
    cpath.write_text(json.dumps(ctl))
    res = run_cli("control", "stabilize", "--config", str(cpath))
    assert res.returncode == 0, res.stderr
    report = json.loads((tmp_path / "ctl" / "report.jsonl").read_text())
    assert report["constraint_violation_max"] <= 1e-6


def test_cli_control_time_optimal_inadmissible(tmp_path):
    cfg = json.loads(json.dumps(BASE_CONFIG))
    cfg["params"] = {"mu": 1.0, "beta": 1.0, "r": 5.0}
    cfg["control"] = {"app": "time-optimal", "kappa_c": 1e-9}
    cfg["initial"] = {
        "kind": "single_mode",
        "mode": {"k": [0, 1], "component": 0, "amplitude": 5.0},
    }
    cfg["output_dir"] = str(tmp_path / "to")
    path = tmp_path / "to.json"
    path.write_text(json.dumps(cfg))
    res = run_cli("control", "time-optimal", "--config", str(path))
    assert res.returncode == 1
    assert "inadmissible" in res.stderr


def test_run_suites_threads_match_serial():
    serial = run_suites(["spectral"], seed=3, threads=1)
    threaded = run_suites(["spectral"], seed=3, threads=4)
    assert [r.to_json() for r in serial] == [r.to_json() for r in threaded]
