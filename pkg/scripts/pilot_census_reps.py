"""Pilot for the replicate count of the census stability gate.

count_z grows roughly linearly in m with a positive intercept, so count_z / m
drifts downward and the per-m CIs separate once they get narrow enough. This
runs the n = 200, m in {60, 80, 100} experiment on pilot seeds for a few
replicate counts and reports how often the CIs share a common point, plus the
fitted line count_z ~ a m + c.
"""
import argparse
import time

import numpy as np

from fpplab.estimators import theorem1_experiment
from fpplab.weights import DistributionSpec, delta3_of, derive_seed, threshold_z

PILOT_SEED = 1013


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--seeds", type=int, default=6)
    ap.add_argument("--reps", default="200,400")
    ap.add_argument("--workers", type=int, default=1)
    args = ap.parse_args()
    spec = DistributionSpec.two_point(0.8, 3)
    z = threshold_z(spec, delta3_of(0.5, 3, 1.0))
    t0 = time.time()
    for reps in [int(x) for x in args.reps.split(",")]:
        stable = 0
        for k in range(args.seeds):
            rep = theorem1_experiment(spec, 200, (60, 80, 100), 3, z, reps,
                                      master_seed=derive_seed(PILOT_SEED, "census", k), workers=args.workers)
            m = np.array([r["m"] for r in rep.rows], dtype=float)
            c = np.array([r["count_z"] for r in rep.rows], dtype=float)
            a, icpt = np.polyfit(m, c, 1)
            stable += rep.stable()
            pts = " ".join(f"{v.point:.4f}" for v in rep.ratio_ci.values())
            print(f"reps {reps} seed {k}: ratios {pts}  stable {rep.stable()}  "
                  f"fit {a:.4f} m + {icpt:.2f}  ({time.time() - t0:.0f}s)", flush=True)
        print(f"reps {reps}: stable on {stable}/{args.seeds} seeds")


if __name__ == "__main__":
    main()
