import json
import os

import pytest

from rotorfdi.cli import main

TINY_GRID = {"trajectories": ["line"], "depths": [0.0, 0.10],
             "dampings": [0.05], "thresholds": [0.005, 0.008],
             "rotors": [2], "duration": 35.0}


def test_stock_demo_names_rotor_two(tmp_path):
    out = tmp_path / "demo"
    assert main(["simulate", "--out", str(out)]) == 0
    verdict = json.loads((out / "verdict.json").read_text())
    assert verdict["verdict"] == 2
    assert 10.1 <= verdict["detected_at"] <= 11.5
    lo, hi = verdict["isolation_interval"]
    assert hi - lo == pytest.approx(21.0)
    assert (out / "timeseries.csv").exists()
    assert (out / "spectra.csv").exists()


def test_zero_duration_writes_empty_traces(tmp_path):
    out = tmp_path / "empty"
    assert main(["simulate", "--duration", "0", "--out", str(out)]) == 0
    assert (out / "timeseries.csv").read_text().count("\n") == 1
    assert (out / "spectra.csv").read_text().count("\n") == 1
    verdict = json.loads((out / "verdict.json").read_text())
    assert not verdict["detected"] and verdict["verdict"] == 0


def test_repeated_seed_reproduces_output_bytes(tmp_path):
    args = ["simulate", "--seed", "7", "--duration", "12"]
    a = tmp_path / "a"
    b = tmp_path / "b"
    assert main(args + ["--out", str(a)]) == 0
    assert main(args + ["--out", str(b)]) == 0
    for name in ("timeseries.csv", "spectra.csv", "verdict.json"):
        assert (a / name).read_bytes() == (b / name).read_bytes()


def test_unknown_config_key_exits_two(tmp_path, capsys):
    cfg = tmp_path / "run.json"
    cfg.write_text('{"bogus": 1}')
    assert main(["simulate", "--config", str(cfg),
                 "--out", str(tmp_path / "o")]) == 2
    assert "bogus" in capsys.readouterr().err


def test_malformed_config_reports_the_line(tmp_path, capsys):
    cfg = tmp_path / "run.json"
    cfg.write_text('{\n broken\n}')
    assert main(["simulate", "--config", str(cfg),
                 "--out", str(tmp_path / "o")]) == 2
    assert "line 2" in capsys.readouterr().err


def test_divergent_flight_exits_three_with_partial_log(tmp_path):
    cfg = tmp_path / "run.json"
    cfg.write_text(json.dumps({"controller": {"k_r": 4e5, "k_w": 2.0},
                               "duration": 10.0}))
    out = tmp_path / "o"
    assert main(["simulate", "--config", str(cfg), "--out", str(out)]) == 3
    verdict = json.loads((out / "verdict.json").read_text())
    assert verdict["diverged"]
    assert (out / "timeseries.csv").read_text().count("\n") > 1


def test_replay_thresholds_land_in_the_verdict_file(tmp_path):
    out = tmp_path / "o"
    assert main(["simulate", "--duration", "14", "--out", str(out),
                 "--replay-thresholds", "0.002,0.01"]) == 0
    verdict = json.loads((out / "verdict.json").read_text())
    rows = verdict["replayed"]
    assert [r["rho"] for r in rows] == [0.002, 0.01]
    assert all(r["detected"] for r in rows)


@pytest.mark.parametrize("bad", ["0.01,0.002", "abc", "", "-0.1,0.2"])
def test_bad_replay_thresholds_exit_two(tmp_path, bad):
    assert main(["simulate", "--duration", "0", "--out",
                 str(tmp_path / "o"),
                 "--replay-thresholds=%s" % bad]) == 2


def test_env_var_sets_the_default_output_root(tmp_path, monkeypatch):
    root = tmp_path / "envout"
    monkeypatch.setenv("ROTORFDI_OUT", str(root))
    assert main(["simulate", "--duration", "0"]) == 0
    assert (root / "verdict.json").exists()


def test_sweep_writes_all_three_artifact_families(tmp_path, capsys):
    grid = tmp_path / "grid.json"
    grid.write_text(json.dumps(TINY_GRID))
    out = tmp_path / "sweep"
    assert main(["sweep", "--config", str(grid), "--out", str(out),
                 "--workers", "1"]) == 0
    for name in ("roc_d05.csv", "confusion_d05.csv", "accuracy.csv",
                 "summary.json"):
        assert (out / name).exists(), name
    assert "records 4" in capsys.readouterr().out
    # resume: nothing left to fly, artifacts unchanged
    before = (out / "summary.json").read_bytes()
    assert main(["sweep", "--config", str(grid), "--out", str(out),
                 "--workers", "1", "--resume"]) == 0
    assert "flights 0" in capsys.readouterr().out
    assert (out / "summary.json").read_bytes() == before


def test_malformed_grid_exits_two(tmp_path, capsys):
    grid = tmp_path / "grid.json"
    grid.write_text("{\n nope\n}")
    assert main(["sweep", "--config", str(grid),
                 "--out", str(tmp_path / "o")]) == 2
    assert "line 2" in capsys.readouterr().err


def test_sweep_replay_thresholds_override_the_grid(tmp_path):
    grid = tmp_path / "grid.json"
    grid.write_text(json.dumps(TINY_GRID))
    out = tmp_path / "sweep"
    assert main(["sweep", "--config", str(grid), "--out", str(out),
                 "--workers", "1", "--replay-thresholds",
                 "0.004,0.008"]) == 0
    names = os.listdir(out / "records")
    assert any(n.endswith("_t0.0040.json") for n in names)
    assert not any(n.endswith("_t0.0050.json") for n in names)
