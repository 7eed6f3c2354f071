"""Command-line interface: exit codes, artifacts, byte-stable outputs."""

import json

import pytest

from ammgame.cli import main
from ammgame.config import canonical_echo, config_hash, default_config

FAST = [
    "--override", "grid.steps=10",
    "--override", "grid.x_points=41",
    "--override", "grid.control_points=5",
    "--override", "engine.traders=16",
]


@pytest.fixture
def cfg_file(tmp_path):
    path = tmp_path / "run.cfg"
    path.write_text("pool.tau = 0.003\nseed = 31\n")
    return path


def read_summary(out_dir):
    with open(out_dir / "summary.json") as fh:
        return json.load(fh)


def test_print_config_echo_and_idempotence(tmp_path, cfg_file, capsys):
    out = tmp_path / "out"
    assert main(["print-config", "--config", str(cfg_file), "--out", str(out)]) == 0
    echo = capsys.readouterr().out
    assert echo == canonical_echo(default_config(seed=31))
    # reloading the echo as a config reproduces it exactly
    echo_file = tmp_path / "echo.cfg"
    echo_file.write_text(echo)
    assert main(["print-config", "--config", str(echo_file)]) == 0
    assert capsys.readouterr().out == echo
    header = (out / "config_echo.txt").read_text().splitlines()
    assert header[0] == "# tool_version = 0.1.0"
    assert header[1].startswith("# config_hash = ")
    assert header[2] == "# seed = 31"


def test_config_error_exits_2(tmp_path, capsys):
    bad = tmp_path / "bad.cfg"
    bad.write_text("pool.tau = 1.5\n")
    out = tmp_path / "out"
    assert main(["simulate", "--config", str(bad), "--out", str(out)]) == 2
    assert "config error" in capsys.readouterr().err
    assert not out.exists()


def test_unknown_override_exits_2(tmp_path, cfg_file):
    out = tmp_path / "out"
    code = main(["simulate", "--config", str(cfg_file), "--out", str(out),
                 "--override", "pool.feerate=1"])
    assert code == 2


def test_simulate_writes_trajectory_and_summary(tmp_path, cfg_file):
    out = tmp_path / "out"
    code = main(["simulate", "--config", str(cfg_file), "--out", str(out), *FAST])
    assert code == 0
    summary = read_summary(out)
    assert set(summary) == {"status", "objective", "final_residual", "runtime_seconds"}
    assert summary["status"] == "ok"
    assert isinstance(summary["runtime_seconds"], float)
    lines = (out / "trajectory.csv").read_text().splitlines()
    assert lines[0].startswith("# tool_version = ")
    assert lines[1] == f"# config_hash = {config_hash(default_config(seed=31, grid_steps=10, grid_x_points=41, grid_control_points=5, engine_traders=16))}"
    assert lines[2] == "# seed = 31"
    assert lines[3].startswith("t,price,x_adj,")
    assert len(lines) == 4 + 11  # header block + column row + steps+1 state rows
    assert lines[-1].split(",")[-1] == "nan"  # per-step fields blank on terminal row


def test_simulate_reruns_byte_identical(tmp_path, cfg_file):
    out_a = tmp_path / "a"
    out_b = tmp_path / "b"
    for out in (out_a, out_b):
        assert main(["simulate", "--config", str(cfg_file), "--out", str(out), *FAST]) == 0
    assert (out_a / "trajectory.csv").read_bytes() == (out_b / "trajectory.csv").read_bytes()
    sa = read_summary(out_a)
    sb = read_summary(out_b)
    sa.pop("runtime_seconds"), sb.pop("runtime_seconds")
    assert sa == sb


def test_seed_flag_beats_config_and_overrides(tmp_path, cfg_file, capsys):
    assert main(["print-config", "--config", str(cfg_file),
                 "--override", "seed=100", "--seed", "7"]) == 0
    assert "seed = 7" in capsys.readouterr().out


def test_solve_mfg_residuals_and_summary(tmp_path, cfg_file):
    out = tmp_path / "out"
    code = main(["solve-mfg", "--config", str(cfg_file), "--out", str(out), *FAST])
    assert code == 0
    summary = read_summary(out)
    assert summary["status"] == "ok"
    assert summary["final_residual"] <= 1e-6
    lines = (out / "residuals.csv").read_text().splitlines()
    assert lines[3] == "iteration,residual"
    assert lines[4].startswith("1,")


def test_failed_solve_writes_summary_and_exits_1(tmp_path, cfg_file, capsys):
    out = tmp_path / "out"
    code = main(["solve-mfg", "--config", str(cfg_file), "--out", str(out), *FAST,
                 "--override", "solver.max_iter=1", "--override", "solver.tol=1e-30"])
    assert code == 1
    assert "failed" in capsys.readouterr().err
    summary = read_summary(out)
    assert summary["status"] == "failed"
    assert summary["objective"] is None
    assert summary["final_residual"] > 0  # last Picard residual from the history
    assert (out / "residuals.csv").exists() is False  # aborted before writing


def test_arb_check_small_draw_count(tmp_path, cfg_file):
    out = tmp_path / "out"
    code = main(["arb-check", "--config", str(cfg_file), "--out", str(out),
                 "--override", "arb.draws=50"])
    assert code == 0
    lines = (out / "arb_check.csv").read_text().splitlines()
    assert len(lines) == 4 + 50
    assert read_summary(out)["status"] == "ok"


def test_lvr_check_small(tmp_path, cfg_file):
    out = tmp_path / "out"
    code = main(["lvr-check", "--config", str(cfg_file), "--out", str(out),
                 "--override", "lvr.paths=200", "--override", "lvr.dt_values=0.01,0.005"])
    assert code == 0
    lines = (out / "residuals.csv").read_text().splitlines()
    assert lines[3] == "dt,n_paths,mean_abs_residual,mean_residual,stderr_residual"
    assert len(lines) == 4 + 2


def test_nash_test_small(tmp_path, cfg_file):
    out = tmp_path / "out"
    code = main(["nash-test", "--config", str(cfg_file), "--out", str(out), *FAST,
                 "--override", "harness.n_values=4,8",
                 "--override", "harness.replications=4"])
    assert code == 0
    lines = (out / "nash_report.csv").read_text().splitlines()
    assert lines[3] == "n_players,gap,stderr,replications"
    assert len(lines) == 4 + 2


def test_solve_major_minor_small(tmp_path, cfg_file):
    out = tmp_path / "out"
    code = main(["solve-major-minor", "--config", str(cfg_file), "--out", str(out), *FAST,
                 "--override", "lp.segments=1", "--override", "solver.budget=25",
                 "--override", "solver.step_tol=0.5"])
    assert code == 0
    trace = (out / "search_trace.csv").read_text().splitlines()
    assert trace[3] == "eval,step,objective,status,seg_0"
    assert (out / "residuals.csv").exists()
    assert read_summary(out)["status"] == "ok"
