"""Command-line entry point: experiment orchestration with bit-exact outputs.

Subcommands: simulate, solve-mfg, solve-major-minor, arb-check, lvr-check,
nash-test, print-config. Every run loads a config file, applies ``--override``
pairs and an optional ``--seed``, then writes its artifacts under ``--out``.

Output discipline:
  * CSV files open with a comment header (tool version, config hash, seed),
    use LF line endings, and print floats with 17 significant digits, so a
    rerun with the same inputs reproduces the files byte for byte.
  * ``summary.json`` always carries exactly the keys ``status``,
    ``objective``, ``final_residual``, ``runtime_seconds``. The runtime field
    is wall-clock and is the one field that varies between identical reruns.

Exit codes: 0 success, 1 experiment failure (diagnostics still written),
2 configuration error.
"""

import argparse
import json
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .arbitrage import best_arbitrage, brute_force_arbitrage
from .config import canonical_echo, config_hash, load_config
from .engine import TimeGrid, simulate
from .errors import AmmGameError, ConfigError, NotConverged
from .harness import convergence_study
from .lvr import run_lvr_experiment
from .solver import solve_major_minor, solve_mfg

SUBCOMMANDS = (
    "simulate",
    "solve-mfg",
    "solve-major-minor",
    "arb-check",
    "lvr-check",
    "nash-test",
    "print-config",
)


def _fmt_cell(v):
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return "%d" % v
    if isinstance(v, (float, np.floating)):
        return "%.17g" % v
    return str(v)


def _header_block(cfg):
    return (
        f"# tool_version = {__version__}\n"
        f"# config_hash = {config_hash(cfg)}\n"
        f"# seed = {cfg.seed}\n"
    )


def _write_csv(path, cfg, columns, rows):
    lines = [_header_block(cfg), ",".join(columns), "\n"]
    body = "\n".join(",".join(_fmt_cell(v) for v in row) for row in rows)
    text = lines[0] + lines[1] + "\n" + (body + "\n" if body else "")
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)


def _write_summary(out_dir, status, objective, final_residual, runtime):
    payload = {
        "status": status,
        "objective": None if objective is None else float(objective),
        "final_residual": None if final_residual is None else float(final_residual),
        "runtime_seconds": float(runtime),
    }
    with open(out_dir / "summary.json", "w", encoding="utf-8", newline="\n") as fh:
        json.dump(payload, fh, indent=2)
        fh.write("\n")


def _run_simulate(cfg, out_dir):
    steps = TimeGrid(cfg.grid_horizon, cfg.grid_steps).steps
    lp_path = np.zeros(steps)
    sol = solve_mfg(cfg, lp_path)
    traj = simulate(cfg, sol.policy.as_policy(), lp_path, cfg.seed)
    times = traj.grid.times()
    columns = [
        "t", "price", "x_adj", "y_adj", "delta", "reserve", "invariant",
        "lvr_cum", "lp_x", "lp_y", "lp_z", "lp_s", "mean_control", "lvr_rate",
    ]
    rows = []
    for t in range(steps + 1):
        step_vals = (
            (traj.mean_control_path[t], traj.lvr_rate_path[t])
            if t < steps
            else (float("nan"), float("nan"))
        )
        rows.append(
            (
                times[t], traj.price_path[t], traj.x_adj_path[t], traj.y_adj_path[t],
                traj.delta_path[t], traj.reserve_path[t], traj.invariant_path[t],
                traj.lvr_cum_path[t], traj.lp_x_path[t], traj.lp_y_path[t],
                traj.lp_z_path[t], traj.lp_s_path[t], *step_vals,
            )
        )
    _write_csv(out_dir / "trajectory.csv", cfg, columns, rows)
    objective = float(np.mean(traj.trader_objectives))
    return objective, sol.certificate_residual


def _run_solve_mfg(cfg, out_dir):
    sol = solve_mfg(cfg)
    rows = [(i + 1, r) for i, r in enumerate(sol.residual_history)]
    _write_csv(out_dir / "residuals.csv", cfg, ["iteration", "residual"], rows)
    return sol.diagnostics["equilibrium_value"], sol.certificate_residual


def _run_solve_major_minor(cfg, out_dir):
    sol = solve_major_minor(cfg)
    seg_cols = [f"seg_{i}" for i in range(cfg.lp_segments)]
    rows = [
        (row["eval"], row["step"], row["objective"], row["status"], *row["segments"])
        for row in sol.search_trace
    ]
    _write_csv(
        out_dir / "search_trace.csv", cfg,
        ["eval", "step", "objective", "status", *seg_cols], rows,
    )
    res_rows = [(i + 1, r) for i, r in enumerate(sol.residual_history)]
    _write_csv(out_dir / "residuals.csv", cfg, ["iteration", "residual"], res_rows)
    return sol.lp_objective, sol.certificate_residual


def _run_arb_check(cfg, out_dir):
    phi = 1.0 - cfg.pool_tau
    rng = np.random.default_rng(np.random.SeedSequence((cfg.seed, 777)))
    columns = [
        "draw", "r_alpha", "r_beta", "m_p", "direction",
        "profit_closed", "profit_oracle", "abs_discrepancy", "side_price_rel_err",
    ]
    rows = []
    worst_gap = 0.0
    worst_side = 0.0
    for i in range(cfg.arb_draws):
        r_alpha = rng.uniform(10.0, 1000.0)
        r_beta = rng.uniform(10.0, 1000.0)
        k = r_alpha * r_beta
        m_p = (r_beta / r_alpha) * rng.uniform(0.5, 2.0)
        sol = best_arbitrage(r_alpha, r_beta, k, m_p, phi)
        buy = brute_force_arbitrage(r_alpha, r_beta, k, m_p, phi)
        sell = brute_force_arbitrage(r_beta, r_alpha, k, 1.0 / m_p, phi)
        profit_oracle = max(0.0, buy.profit, sell.profit * m_p)
        gap = abs(sol.profit - profit_oracle) / (1.0 + abs(profit_oracle))
        side_err = 0.0
        if sol.direction == "buy_eth":
            spot_post = k / (r_alpha - sol.delta_alpha) ** 2
            side_err = abs(spot_post - phi * m_p) / (phi * m_p)
        elif sol.direction == "sell_eth":
            spot_post = (r_beta - sol.delta_beta) ** 2 / k
            side_err = abs(spot_post - m_p / phi) / (m_p / phi)
        worst_gap = max(worst_gap, gap)
        worst_side = max(worst_side, side_err)
        rows.append(
            (i, r_alpha, r_beta, m_p, sol.direction, sol.profit, profit_oracle, gap, side_err)
        )
    _write_csv(out_dir / "arb_check.csv", cfg, columns, rows)
    ok = worst_gap <= 1e-6 and worst_side <= 1e-8
    if not ok:
        raise NotConverged(
            f"arbitrage oracle disagreement: profit gap {worst_gap:.3e}, "
            f"side-price error {worst_side:.3e}",
            residual_history=[worst_gap],
        )
    return worst_gap, worst_side


def _run_lvr_check(cfg, out_dir):
    columns = ["dt", "n_paths", "mean_abs_residual", "mean_residual", "stderr_residual"]
    rows = []
    accounts = []
    for dt in cfg.lvr_dt_values:
        acct = run_lvr_experiment(cfg, dt=dt)
        accounts.append(acct)
        rows.append(
            (dt, acct.n_paths, acct.mean_abs_residual, acct.mean_residual, acct.stderr_residual)
        )
    _write_csv(out_dir / "residuals.csv", cfg, columns, rows)
    finest = min(accounts, key=lambda a: a.dt)
    z = abs(finest.mean_residual) / finest.stderr_residual if finest.stderr_residual else 0.0
    if z > 5.0:
        raise NotConverged(
            f"replication identity violated at dt={finest.dt:g}: "
            f"mean residual {finest.mean_residual:.3e} is {z:.1f} standard errors from 0",
            residual_history=[z],
        )
    return finest.mean_abs_residual, z


def _run_nash_test(cfg, out_dir):
    report = convergence_study(cfg)
    columns = ["n_players", "gap", "stderr", "replications"]
    rows = [
        (n, g, s, report.replications)
        for n, g, s in zip(report.n_values, report.gaps, report.stderrs)
    ]
    _write_csv(out_dir / "nash_report.csv", cfg, columns, rows)
    floor = report.gaps + 3.0 * report.stderrs
    if np.any(floor < 0.0):
        worst = int(np.argmin(floor))
        raise NotConverged(
            f"deviation gain significantly negative at N={report.n_values[worst]}: "
            f"gap {report.gaps[worst]:.3e} with stderr {report.stderrs[worst]:.3e}",
            residual_history=[float(-floor[worst])],
        )
    return report.slope, float(report.gaps[-1])


_RUNNERS = {
    "simulate": _run_simulate,
    "solve-mfg": _run_solve_mfg,
    "solve-major-minor": _run_solve_major_minor,
    "arb-check": _run_arb_check,
    "lvr-check": _run_lvr_check,
    "nash-test": _run_nash_test,
}


def build_parser():
    parser = argparse.ArgumentParser(
        prog="ammgame",
        description="Constant-product market game: simulation, equilibria, diagnostics.",
    )
    sub = parser.add_subparsers(dest="subcommand", required=True)
    for name in SUBCOMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, help="path to a key=value config file")
        p.add_argument(
            "--out",
            required=(name != "print-config"),
            help="output directory (created if missing)",
        )
        p.add_argument("--seed", type=int, default=None, help="override the config seed")
        p.add_argument(
            "--override",
            action="append",
            default=[],
            metavar="KEY=VALUE",
            help="override a config entry (repeatable)",
        )
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    overrides = list(args.override)
    if args.seed is not None:
        overrides.append(f"seed={args.seed}")
    try:
        cfg = load_config(args.config, overrides)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2

    if args.subcommand == "print-config":
        echo = canonical_echo(cfg)
        sys.stdout.write(echo)
        if args.out:
            out_dir = Path(args.out)
            out_dir.mkdir(parents=True, exist_ok=True)
            with open(out_dir / "config_echo.txt", "w", encoding="utf-8", newline="\n") as fh:
                fh.write(_header_block(cfg))
                fh.write(echo)
        return 0

    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    start = time.perf_counter()
    try:
        objective, final_residual = _RUNNERS[args.subcommand](cfg, out_dir)
    except AmmGameError as exc:
        residual = None
        if isinstance(exc, NotConverged) and exc.residual_history:
            residual = exc.residual_history[-1]
        _write_summary(out_dir, "failed", None, residual, time.perf_counter() - start)
        print(f"{args.subcommand} failed: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # contract pins exit codes to {0, 1, 2}
        _write_summary(out_dir, "failed", None, None, time.perf_counter() - start)
        print(f"{args.subcommand} failed unexpectedly: {exc}", file=sys.stderr)
        return 1
    _write_summary(out_dir, "ok", objective, final_residual, time.perf_counter() - start)
    return 0


if __name__ == "__main__":
    sys.exit(main())
