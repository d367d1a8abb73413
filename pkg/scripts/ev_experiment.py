"""EV charging experiment: learn the response matrix, then run 50 decaying-step trials.

Writes the standard pipeline artifacts plus a rate report. Plot ``summary.csv``
(mean_error_sq against t, with the ci band) on log-log axes to see the 1/t decay.

    python3 scripts/ev_experiment.py --out results/ev --seed 0
"""

import argparse
from pathlib import Path

from ddgame import harness, solver


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--config", help="optional INI config layered over the defaults")
    ap.add_argument("--out", default="results/ev")
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--trials", type=int, default=50)
    args = ap.parse_args()

    text = Path(args.config).read_text() if args.config else None
    cfg = harness.parse_config(text).with_master_seed(args.seed)
    cfg.trials = args.trials
    run = harness.pipeline(cfg, args.out)

    traj = solver.read_trajectories_csv(Path(args.out) / "trajectory.csv")
    stride = cfg.solver.log_stride
    trajs = [solver.Trajectory(d["t"][:, None], d["error_sq"], d["residual"], stride) for d in traj.values()]
    report = solver.rate_check(trajs, run.alpha, cfg.solver.r, min_trials=min(10, len(trajs)))
    print(f"||B_hat - B||_F = {run.erm_error:.4g}; alpha = {run.alpha:.4g}; L = {run.grad_lipschitz:.4g}")
    print(f"x_hat  = {run.x_hat.round(5)}")
    print(f"x_star = {run.x_star.round(5)}")
    print("\n".join(report.lines()))
    (Path(args.out) / "rate_report.txt").write_text("\n".join(report.lines()) + "\n")


if __name__ == "__main__":
    main()
