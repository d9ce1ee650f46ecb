"""Configuration parsing and command-line contract tests."""

import hashlib
import json
import os
import subprocess
import sys

import numpy as np
import pytest

from trapload.cli import run_command
from trapload.config import ConfigError, RunConfig, load_config, save_config


def _sha(path):
    return hashlib.sha256(path.read_bytes()).hexdigest()


# ---------------------------------------------------------------------------
# config files
# ---------------------------------------------------------------------------


def test_empty_file_gives_defaults(tmp_path):
    path = tmp_path / "empty.ini"
    path.write_text("")
    cfg = load_config(path)
    assert cfg == RunConfig()
    assert cfg.pressure_mbar == 1.0
    assert cfg.power_w == 0.2
    assert cfg.waist_m == 6e-6
    assert cfg.distance_m == 8e-3


def test_negative_pressure_names_key(tmp_path):
    path = tmp_path / "bad.ini"
    path.write_text("[gas]\npressure_mbar = -1\n")
    with pytest.raises(ConfigError, match="gas.pressure_mbar"):
        load_config(path)


def test_unknown_key_rejected(tmp_path):
    path = tmp_path / "bad.ini"
    path.write_text("[gas]\npressure_bar = 1\n")
    with pytest.raises(ConfigError, match="gas.pressure_bar"):
        load_config(path)
    path.write_text("[laser]\npower = 1\n")
    with pytest.raises(ConfigError, match="laser"):
        load_config(path)


def test_roundtrip_bit_identical(tmp_path):
    cfg = RunConfig()
    cfg.waist_m = 6e-6
    cfg.pressure_mbar = 0.123456789012345
    cfg.seed = 987654321
    first = tmp_path / "a.ini"
    save_config(cfg, first)
    loaded = load_config(first)
    assert loaded == cfg
    second = tmp_path / "b.ini"
    save_config(loaded, second)
    assert first.read_text() == second.read_text()


def test_bad_schema_version(tmp_path):
    path = tmp_path / "v.ini"
    path.write_text("[meta]\nschema_version = 7\n")
    with pytest.raises(ConfigError, match="schema_version"):
        load_config(path)


def test_missing_file_is_config_error(tmp_path):
    with pytest.raises(ConfigError):
        load_config(tmp_path / "nope.ini")


# ---------------------------------------------------------------------------
# CLI contract
# ---------------------------------------------------------------------------


def _fast_cfg(tmp_path, **overrides):
    cfg = RunConfig()
    cfg.t_max_s = 0.02
    cfg.capture_hold_s = 2e-3
    cfg.events = 20
    for key, value in overrides.items():
        setattr(cfg, key, value)
    path = tmp_path / "run.ini"
    save_config(cfg, path)
    return path


def test_unknown_subcommand_exits_2(tmp_path):
    outcome = run_command(["wibble"])
    assert outcome.exit_code == 2


def test_bad_flag_exits_2(tmp_path):
    outcome = run_command(["trajectory", "--bogus"])
    assert outcome.exit_code == 2


def test_bad_config_exits_2(tmp_path):
    bad = tmp_path / "bad.ini"
    bad.write_text("[gas]\npressure_mbar = -2\n")
    outcome = run_command(["--config", str(bad), "shots", "--lam", "1", "--p", "0.5"])
    assert outcome.exit_code == 2


def test_shots_single_probability(tmp_path, capsys):
    outcome = run_command(
        ["--out-dir", str(tmp_path), "shots", "--lam", "1", "--p", "1"]
    )
    assert outcome.exit_code == 0
    doc = json.loads((tmp_path / "shots.json").read_text())
    assert doc["p_single"] == pytest.approx(np.exp(-1.0), rel=1e-12)
    assert (tmp_path / "shots_manifest.json").exists()
    captured = capsys.readouterr()
    assert "P(single)" in captured.out


def test_trajectory_deterministic_trace(tmp_path):
    cfg = _fast_cfg(tmp_path)
    dir_a = tmp_path / "a"
    dir_b = tmp_path / "b"
    for d in (dir_a, dir_b):
        outcome = run_command(
            ["--config", str(cfg), "--seed", "7", "--out-dir", str(d),
             "trajectory", "--decimate", "50"]
        )
        assert outcome.exit_code == 0
        assert (d / "trajectory_trace.csv").exists()
        assert (d / "trajectory_outcome.json").exists()
        assert (d / "trajectory_manifest.json").exists()
    assert _sha(dir_a / "trajectory_trace.csv") == _sha(dir_b / "trajectory_trace.csv")
    assert _sha(dir_a / "trajectory_outcome.json") == _sha(dir_b / "trajectory_outcome.json")
    header = (dir_a / "trajectory_trace.csv").read_text().splitlines()[0]
    assert header == "t_s,x_m,y_m,z_m,vx_mps,vy_mps,vz_mps"


def test_sweep_artifacts_and_worker_invariance(tmp_path):
    cfg = _fast_cfg(tmp_path, events=30)
    hashes = {}
    for workers in (1, 2):
        d = tmp_path / f"w{workers}"
        outcome = run_command(
            ["--config", str(cfg), "--out-dir", str(d), "--workers", str(workers),
             "sweep", "--param", "pressure", "--grid", "0.5,1.0"]
        )
        assert outcome.exit_code == 0
        hashes[workers] = (
            _sha(d / "sweep_pressure.json"),
            _sha(d / "sweep_pressure.csv"),
        )
        doc = json.loads((d / "sweep_pressure.json").read_text())
        assert doc["schema_version"] == 1
        assert len(doc["points"]) == 2
        assert doc["points"][0]["n"] == 30
    assert hashes[1] == hashes[2]


def test_sweep_grid_parsing_log(tmp_path):
    cfg = _fast_cfg(tmp_path, events=5)
    d = tmp_path / "log"
    outcome = run_command(
        ["--config", str(cfg), "--out-dir", str(d),
         "sweep", "--param", "pressure", "--grid", "0.1:10:log:3"]
    )
    assert outcome.exit_code == 0
    doc = json.loads((d / "sweep_pressure.json").read_text())
    values = [p["value"] for p in doc["points"]]
    assert values == pytest.approx([10.0, 100.0, 1000.0])  # Pa for mbar grid


def test_sweep_bad_grid_exits_2(tmp_path):
    cfg = _fast_cfg(tmp_path)
    outcome = run_command(
        ["--config", str(cfg), "sweep", "--param", "pressure", "--grid", "nope"]
    )
    assert outcome.exit_code == 2


def test_psd_and_velocity_pipeline(tmp_path):
    cfg = _fast_cfg(tmp_path, events=25, distribution="delta", speed_m_s=5.0,
                    pressure_mbar=2.5e-7)
    d = tmp_path / "pipe"
    outcome = run_command(
        ["--config", str(cfg), "--out-dir", str(d),
         "sweep", "--param", "pressure", "--grid", "2.5e-7", "--save-events"]
    )
    assert outcome.exit_code == 0
    events_csv = d / "sweep_pressure_events_00.csv"
    assert events_csv.exists()

    outcome = run_command(
        ["--config", str(cfg), "--out-dir", str(d),
         "velocity", "--input", str(events_csv)]
    )
    assert outcome.exit_code == 0
    rows = (d / "speeds.csv").read_text().splitlines()
    assert rows[0] == "arrival_time_s,speed_m_s"
    speeds = [float(r.split(",")[1]) for r in rows[1:]]
    assert len(speeds) == 25
    # collisionless delta launch: reconstructed speeds match injection to <1%
    assert np.allclose(speeds, 5.0, rtol=1e-2)

    # synthetic trace: a narrow noisy line at 5 kHz, fit emitted
    rng = np.random.default_rng(8)
    t = np.arange(1 << 15) * 1e-5
    carrier = np.sin(2 * np.pi * 5000.0 * t + 0.02 * np.cumsum(rng.normal(size=t.size)))
    trace = np.zeros((t.size, 7))
    trace[:, 0] = t
    trace[:, 3] = 3e-9 * carrier + 2e-10 * rng.normal(size=t.size)
    rows = ["t_s,x_m,y_m,z_m,vx_mps,vy_mps,vz_mps"] + [
        ",".join(repr(float(v)) for v in row) for row in trace
    ]
    trace_path = d / "synthetic_trace.csv"
    trace_path.write_text("\n".join(rows) + "\n")
    outcome = run_command(
        ["--out-dir", str(d), "psd", "--input", str(trace_path),
         "--segment", "4096", "--fit"]
    )
    assert outcome.exit_code == 0
    assert (d / "psd.csv").exists()
    fit = json.loads((d / "psd_fit.json").read_text())
    assert fit["converged"] is True
    assert fit["f0_hz"] == pytest.approx(5000.0, rel=0.1)


def test_out_dir_environment_variable(tmp_path, monkeypatch):
    monkeypatch.setenv("TRAPLOAD_OUT_DIR", str(tmp_path / "envdir"))
    outcome = run_command(["shots", "--lam", "2", "--p", "0.25"])
    assert outcome.exit_code == 0
    assert (tmp_path / "envdir" / "shots.json").exists()


def test_console_entry_point_runs():
    proc = subprocess.run(
        [sys.executable, "-m", "trapload.cli", "shots", "--lam", "1", "--p", "0.5"],
        capture_output=True,
        text=True,
        cwd=os.fspath(os.path.dirname(__file__)),
        env={**os.environ, "TRAPLOAD_OUT_DIR": os.fspath(os.path.dirname(__file__))},
    )
    assert proc.returncode == 0
    assert "P(single)" in proc.stdout
    for name in ("shots.json", "shots_manifest.json"):
        path = os.path.join(os.path.dirname(__file__), name)
        if os.path.exists(path):
            os.remove(path)
