"""Command-line entry point: ``ddgame <subcommand> [--config PATH] [--seed N] [--out DIR] [--trials N]``."""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from . import distmap, harness, learn, market, solver
from .errors import ConfigError, NumericalError

EXIT_OK, EXIT_CONFIG, EXIT_NUMERICAL = 0, 1, 2


def _config(args) -> harness.ExperimentConfig:
    cfg = harness.load_config(args.config) if args.config else harness.parse_config()
    if args.seed is not None:
        cfg = cfg.with_master_seed(args.seed)
    if args.trials is not None:
        if args.trials < 1:
            raise ConfigError("--trials must be positive")
        cfg.trials = args.trials
    if args.out is not None:
        cfg.output_dir = args.out
    return cfg


def _out(cfg) -> Path:
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _write_matrix(path, B) -> None:
    np.savetxt(path, np.atleast_2d(B), delimiter=",", fmt="%.17g")


def cmd_sample(cfg, args) -> int:
    out = _out(cfg)
    params = harness.build_market(cfg)
    data = harness.run_sampling(cfg, params)
    data.to_csv(out / "dataset.csv")
    market.write_demand_csv(out / "demand.csv", params.base_demand)
    print(f"wrote {data.m} records to {out / 'dataset.csv'}")
    return EXIT_OK


def _load_or_sample(cfg, params) -> distmap.Dataset:
    path = Path(cfg.output_dir) / "dataset.csv"
    return distmap.Dataset.from_csv(path) if path.exists() else harness.run_sampling(cfg, params)


def cmd_learn(cfg, args) -> int:
    out = _out(cfg)
    params = harness.build_market(cfg)
    data = _load_or_sample(cfg, params)
    B_hat = harness.run_learning(cfg, data).B_hat
    _write_matrix(out / "b_hat.csv", B_hat)
    print(f"||B_hat - B||_F = {np.linalg.norm(B_hat - params.B):.6g}")
    print(np.array2string(B_hat, precision=6))
    return EXIT_OK


def cmd_bounds(cfg, args) -> int:
    out = _out(cfg)
    params = harness.build_market(cfg)
    data = _load_or_sample(cfg, params)
    B_hat = harness.run_learning(cfg, data).B_hat
    report = harness.learning_bounds(cfg, params, data, B_hat)
    (out / "bounds.txt").write_text(report.to_text())
    print(report.to_text(), end="")
    return EXIT_OK


def cmd_solve(cfg, args) -> int:
    out = _out(cfg)
    params = harness.build_market(cfg)
    path = out / "b_hat.csv"
    B_model = np.atleast_2d(np.loadtxt(path, delimiter=",")) if path.exists() else params.B
    alpha, L = harness.certified_constants(params, B_model)
    x_hat = harness.equilibrium(params, B_model)
    feed = solver.MarketFeed(params, B_model)
    scfg = harness.solver_config(cfg, params, alpha, L)
    trajs = solver.run_trials(scfg, feed, params.box, cfg.trials, cfg.seed, x_ref=x_hat, workers=cfg.workers or 1)
    solver.write_trajectories_csv(out / "trajectory.csv", trajs)
    if len(trajs) >= 2:
        harness.write_summary_csv(out / "summary.csv", harness.summarize(trajs))
    print(f"alpha={alpha:.6g} L={L:.6g} x_hat={np.array2string(x_hat, precision=6)}")
    print(f"final mean error_sq={np.mean([tr.errors[-1] for tr in trajs]):.6g}")
    return EXIT_OK


def cmd_pipeline(cfg, args) -> int:
    run = harness.pipeline(cfg)
    print(run.to_text(), end="")
    return EXIT_OK


def cmd_verify(cfg, args) -> int:
    params = harness.build_market(cfg)
    results = harness.verify_suite(params, np.random.default_rng(cfg.seed))
    for r in results:
        print(r.line())
    return EXIT_OK if all(r.passed for r in results) else EXIT_NUMERICAL


COMMANDS = {
    "sample": (cmd_sample, "draw decisions and record responses into dataset.csv"),
    "learn": (cmd_learn, "fit the response matrix from dataset.csv (sampling first if absent)"),
    "solve": (cmd_solve, "run stochastic gradient play on the learned (or true) game"),
    "pipeline": (cmd_pipeline, "sample, learn and solve in one reproducible run"),
    "verify": (cmd_verify, "check the market and solver against the oracle suite"),
    "bounds": (cmd_bounds, "print the learning bound report"),
}


def _global_flags(default):
    # subparsers get SUPPRESS defaults so flags given before the subcommand survive
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", default=default, help="INI-style experiment config")
    common.add_argument("--seed", type=int, default=default, help="master seed; derives every other seed")
    common.add_argument("--out", default=default, help="output directory")
    common.add_argument("--trials", type=int, default=default, help="override the trial count")
    return common


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="ddgame", description=__doc__, parents=[_global_flags(None)])
    sub = p.add_subparsers(dest="command", required=True)
    for name, (_, help_) in COMMANDS.items():
        sub.add_parser(name, help=help_, parents=[_global_flags(argparse.SUPPRESS)])
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code else EXIT_OK
    try:
        cfg = _config(args)
        return COMMANDS[args.command][0](cfg, args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except harness.PipelineError as exc:
        print(f"error: {exc}", file=sys.stderr)
        if isinstance(exc.cause, ConfigError):
            return EXIT_CONFIG
        return EXIT_NUMERICAL if isinstance(exc.cause, NumericalError) else 3
    except NumericalError as exc:
        print(f"numerical failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
