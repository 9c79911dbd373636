"""Pilot for the diagonal variance-ratio cap used by the anisotropy acceptance gate.

Runs the diagonal scan at n = 32 and n = 256 with the acceptance replicate
count on pilot seeds that the acceptance run never uses, then fixes

    cap = ceil_0.1(mean(ratio) + 4 sd(ratio))

and writes it, with the pilot seed and the raw ratios, to pilot_caps.json.
"""
import argparse
import json
import math
import time
from pathlib import Path

import numpy as np

from fpplab.estimators import variance_scan
from fpplab.weights import DistributionSpec, derive_seed

PILOT_SEED = 1009


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--seeds", type=int, default=20)
    ap.add_argument("--reps", type=int, default=400)
    ap.add_argument("--out", default=str(Path(__file__).with_name("pilot_caps.json")))
    args = ap.parse_args()
    spec = DistributionSpec.two_point(0.8, 3)
    ratios = []
    t0 = time.time()
    for k in range(args.seeds):
        s = derive_seed(PILOT_SEED, "pilot", k)
        res = variance_scan(spec, "diagonal", (32, 256), args.reps, s)
        ratios.append(res.ratio(256, 32))
        print(f"pilot {k:2d}  ratio {ratios[-1]:.3f}  ({time.time() - t0:.0f}s)", flush=True)
    r = np.array(ratios)
    cap = math.ceil((r.mean() + 4 * r.std(ddof=1)) * 10) / 10
    rec = {"pilot_seed": PILOT_SEED, "distribution": spec.to_text(), "reps": args.reps,
           "n_lo": 32, "n_hi": 256, "ratios": [round(x, 6) for x in ratios],
           "mean": round(float(r.mean()), 6), "sd": round(float(r.std(ddof=1)), 6),
           "rule": "ceil_0.1(mean + 4 sd)", "diagonal_ratio_cap": cap}
    Path(args.out).write_text(json.dumps(rec, indent=2) + "\n")
    print(json.dumps(rec, indent=2))


if __name__ == "__main__":
    main()
