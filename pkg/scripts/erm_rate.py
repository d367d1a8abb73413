"""Least-squares estimation error against sample size on the EV response model.

For each m the median ||B_hat - B||_F over seeds is written to CSV together with
the high-probability bound for one provider's row; the fitted log-log slope
should sit near -1/2.

    python3 scripts/erm_rate.py --out results/erm_rate.csv
"""

import argparse
import csv

import numpy as np

from ddgame import distmap, harness, learn


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", default="erm_rate.csv")
    ap.add_argument("--seeds", type=int, default=20)
    ap.add_argument("--ms", default="100,300,1000,3000,10000,30000")
    args = ap.parse_args()

    cfg = harness.parse_config()
    params = harness.build_market(cfg)
    dmap = distmap.LocationScaleMap(params.B, distmap.EmpiricalBase(params.base_demand))
    dist = distmap.UniformBox(harness.sampling_box(cfg, params))
    ms = [int(v) for v in args.ms.split(",")]
    rows = []
    for m in ms:
        errs, row_errs = [], []
        for s in range(args.seeds):
            data = distmap.collect_dataset(dmap, dist, m, np.random.default_rng([m, s]))
            B_hat = learn.fit_least_squares(data).B_hat
            errs.append(np.linalg.norm(B_hat - params.B))
            row_errs.append(np.linalg.norm(B_hat[0] - params.B[0]))
        cfg.sampling.m = m
        bound = harness.learning_bounds(cfg, params, data, B_hat).erm_bound
        rows.append((m, float(np.median(errs)), float(np.quantile(row_errs, 0.9)), bound))
        print(f"m={m:6d} median error {rows[-1][1]:.4g}  row-0 90% quantile {rows[-1][2]:.4g}  row bound {bound:.4g}")
    slope = np.polyfit(np.log(ms), np.log([r[1] for r in rows]), 1)[0]
    print(f"log-log slope {slope:.3f}")
    with open(args.out, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["m", "median_error", "row0_q90", "row0_bound"])
        for r in rows:
            w.writerow([r[0]] + [format(v, ".17g") for v in r[1:]])


if __name__ == "__main__":
    main()
