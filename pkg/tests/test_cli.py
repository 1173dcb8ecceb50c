import csv
import io
import json
import subprocess
import sys

import pytest

from dobstab.cli import ROOTLOCUS_COLUMNS, main, parse_sweep
from dobstab.config import ConfigError, RunConfig, parse_config
from dobstab.sim import TRACE_COLUMNS


def run(argv, capsys):
    code = main(argv)
    out, err = capsys.readouterr()
    return code, out, err


def write(tmp_path, text, name="cfg.json"):
    p = tmp_path / name
    p.write_text(text)
    return str(p)


def rows(text):
    return list(csv.reader(io.StringIO(text)))


class TestConfig:
    def test_defaults(self):
        cfg = parse_config("{}")
        assert cfg.plant.J == 0.1 and cfg.T_s == 1e-3
        assert cfg.gains.K_p == 500 and cfg.gains.K_v == 25
        assert cfg.n_steps == 10_000

    def test_json_round_trip_is_identical(self):
        cfg = parse_config('{"plant": {"J": 0.123456789012345678}, "observer": {"g_D": 77.7}}')
        again = parse_config(json.dumps(cfg.to_json_dict()))
        assert again == cfg
        assert again.to_json_dict() == cfg.to_json_dict()

    def test_error_names_line(self):
        with pytest.raises(ConfigError) as info:
            parse_config('{\n  "T_s": 0\n}', "run.json")
        assert str(info.value) == "run.json:2: T_s: sampling period must be positive"

    def test_unknown_field(self):
        with pytest.raises(ConfigError, match="Extra inputs"):
            parse_config('{"plant": {"J": 1, "mass": 2}}')

    def test_velocity_gain_alias(self):
        assert parse_config('{"gains": {"K_d": 30}}').gains.K_v == 30
        with pytest.raises(ConfigError, match="aliases"):
            parse_config('{"gains": {"K_d": 30, "K_v": 30}}')

    def test_invalid_json(self):
        with pytest.raises(ConfigError, match="invalid JSON"):
            parse_config("{ nope")

    def test_nyquist_checked_at_parse_time(self):
        with pytest.raises(ConfigError, match="Nyquist"):
            parse_config('{"scenario": {"disturbance": {"kind": "sine", "amplitude": 1, "frequency": 900}}}')

    def test_composite_disturbance(self):
        cfg = RunConfig()
        d = cfg.disturbance_profile()
        assert d.kind == "composite" and len(d.parts) == 2


def test_parse_sweep():
    assert parse_sweep("g_D:1:200:50") == ("g_D", 1.0, 200.0, 50)
    for bad in ("g_D:1:2", "beta:1:2:3", "g_D:1:2:1", "g_D:2:1:5", "g_D:a:2:5"):
        with pytest.raises(ValueError):
            parse_sweep(bad)


def test_discretize_defaults(capsys):
    code, out, _ = run(["discretize", "--format", "json"], capsys)
    assert code == 0
    data = json.loads(out)
    assert data["gain_upper_bound"] == pytest.approx(199.90004997501251, rel=1e-15)
    assert data["plant"]["A_D"] == [[1, 0.001], [0, 1]]


def test_discretize_csv(capsys):
    code, out, _ = run(["discretize"], capsys)
    table = rows(out)
    assert code == 0
    assert table[0] == ["model", "quantity", "row", "col", "value"]
    assert table[-1][:2] == ["nominal", "gain_upper_bound"]


def test_invalid_sampling_period_exit_2(tmp_path, capsys):
    code, _, err = run(["discretize", "--config", write(tmp_path, '{"T_s": 0}')], capsys)
    assert code == 2
    assert "sampling period must be positive" in err
    assert "cfg.json:1" in err


def test_missing_config_exit_2(tmp_path, capsys):
    code, _, err = run(["discretize", "--config", str(tmp_path / "none.json")], capsys)
    assert code == 2 and "cannot read config" in err


def test_constraints_defaults_pass(capsys):
    code, out, err = run(["constraints", "--format", "json"], capsys)
    report = json.loads(out)
    assert code == 0
    assert report["observer"]["satisfied"] and report["inner_constraint"]["satisfied"]
    assert report["outer_loop"]["classification"] == "stable"
    assert "VIOLATED" not in err


def test_constraints_gain_bound_violation(tmp_path, capsys):
    code, out, err = run(["constraints", "--format", "json", "--config", write(tmp_path, '{"observer": {"g_D": 250}}')], capsys)
    report = json.loads(out)
    assert code == 0
    assert not report["observer"]["satisfied"]
    assert report["observer"]["classification"] == "unstable"
    assert "VIOLATED" in err


def test_constraints_inner_violation(tmp_path, capsys):
    # alpha = 2 and gn = g ||D_n||_1 = 1.25, so alpha * gn = 2.5
    g = 1.25 / (1e-3 * 2.001 / 0.4)
    cfg = json.dumps({"nominal": {"J_n": 0.2}, "observer": {"g_D": g}})
    code, out, _ = run(["constraints", "--format", "json", "--config", write(tmp_path, cfg)], capsys)
    report = json.loads(out)
    assert report["inner_constraint"]["alpha_times_gain"] == pytest.approx(2.5)
    assert not report["inner_constraint"]["satisfied"]
    assert report["inner_loop"]["classification"] == "unstable"


def test_rootlocus_boundary_for_zero_outer_gains(tmp_path, capsys):
    cfg = write(tmp_path, '{"nominal": {"J_n": 0.05}, "gains": {"K_p": 0, "K_v": 0}}')
    code, out, _ = run(["rootlocus", "--config", cfg, "--sweep", "g_n:0.1:6:40"], capsys)
    table = rows(out)
    assert code == 0
    assert tuple(table[0]) == ROOTLOCUS_COLUMNS
    assert len(table) == 41
    assert float(table[1][-1]) == pytest.approx(2 / 0.5, rel=1e-8)


def test_rootlocus_single_sample_exit_2(capsys):
    code, _, err = run(["rootlocus", "--sweep", "g_D:1:100:1"], capsys)
    assert code == 2 and "at least 2" in err


def test_rootlocus_requires_sweep(capsys):
    assert run(["rootlocus"], capsys)[0] == 2


def test_rootlocus_is_deterministic_across_threads(monkeypatch, capsys):
    monkeypatch.setenv("DOBSTAB_THREADS", "1")
    _, one, _ = run(["rootlocus", "--sweep", "alpha:0.2:5:25"], capsys)
    monkeypatch.setenv("DOBSTAB_THREADS", "6")
    _, many, _ = run(["rootlocus", "--sweep", "alpha:0.2:5:25"], capsys)
    assert one == many


def test_bode(capsys):
    code, out, _ = run(["bode", "--format", "json", "--points", "200"], capsys)
    data = json.loads(out)
    assert code == 0
    assert len(data["omega"]) == 200
    assert 0 < data["phase_margin"] < 180


def test_bode_with_friction_uses_state_space(tmp_path, capsys):
    cfg = write(tmp_path, '{"plant": {"J": 0.1, "b": 0.01}, "nominal": {"J_n": 0.1, "b_n": 0.01}}')
    code, out, _ = run(["bode", "--config", cfg, "--format", "json"], capsys)
    assert code == 0
    assert json.loads(out)["phase_margin"] > 0


def test_simulate_writes_traces_and_metrics(tmp_path, capsys):
    cfg = write(tmp_path, '{"scenario": {"horizon": 1.0}}')
    out = tmp_path / "run.csv"
    code, _, _ = run(["simulate", "--config", cfg, "--output", str(out)], capsys)
    assert code == 0
    dob = rows(out.read_text())
    assert tuple(dob[0]) == TRACE_COLUMNS
    assert len(dob) == 1001
    pid = rows((tmp_path / "run_pid.csv").read_text())
    assert pid[1][TRACE_COLUMNS.index("tau_hat")] == ""
    metrics = json.loads((tmp_path / "run_metrics.json").read_text())
    assert metrics["dob"]["diverged"] is False


def test_simulate_matched_model_tracks_exactly(tmp_path, capsys):
    cfg = write(tmp_path, '{"scenario": {"horizon": 5.0, "disturbance": {"kind": "constant"}, "run_pid": false}}')
    code, out, _ = run(["simulate", "--config", cfg], capsys)
    metrics = json.loads(out)
    assert code == 0
    assert "pid" not in metrics
    assert metrics["dob"]["steady_state_error"] < 1e-6


def test_simulate_unstable_gain_reports_divergence(tmp_path, capsys):
    cfg = write(tmp_path, '{"observer": {"g_D": 300}, "scenario": {"horizon": 2.0, "run_pid": false}}')
    code, out, err = run(["simulate", "--config", cfg], capsys)
    metrics = json.loads(out)
    assert code == 0
    assert metrics["dob"]["diverged"] is True
    assert metrics["dob"]["diverged_at_step"] > 0
    assert "diverged" in err


def test_emitted_config_reproduces_run(tmp_path, capsys):
    cfg = write(tmp_path, '{"observer": {"g_D": 42.5}, "scenario": {"horizon": 0.5}}')
    _, first, _ = run(["simulate", "--config", cfg], capsys)
    echoed = write(tmp_path, json.dumps(json.loads(first)["config"]), "echo.json")
    _, second, _ = run(["simulate", "--config", echoed], capsys)
    assert first == second


def test_console_entry_point():
    proc = subprocess.run(
        [sys.executable, "-m", "dobstab.cli", "discretize", "--format", "json"],
        capture_output=True,
        text=True,
        check=False,
    )
    assert proc.returncode == 0
    assert "gain_upper_bound" in proc.stdout
