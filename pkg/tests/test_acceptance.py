"""Acceptance gates, one function per criterion.

Each ``criterion_k`` returns ``(passed, detail)``. Under pytest every gate
prints one ``CRITERION k: PASS|FAIL`` line and asserts; run the file directly
(``python3 tests/test_acceptance.py``) to get the eight lines without pytest.
"""
import contextlib
import io
import json
import math
import sys
import tempfile
import time
from pathlib import Path

import numpy as np
import pytest
from scipy.stats import ks_2samp

from fpplab import cli
from fpplab import estimators as E
from fpplab.bridges import check_invariants, classify_ne_se, find_broken_bridges
from fpplab.geodesics import Region, auto_region, brute_force_passage, passage_time
from fpplab.oriented import expected_r1, right_edges, two_param
from fpplab.stats import intersect, ols_slope
from fpplab.weights import Configuration, DistributionSpec, delta3_of, derive_seed, threshold_z

TP = DistributionSpec.two_point(0.8, 3)
SEED = 2026  # master seed for the single-seed gates
PILOT = json.loads((Path(__file__).resolve().parents[1] / "scripts" / "pilot_caps.json").read_text())


def _saws(max_vertices):
    out = []

    def grow(path):
        out.append(list(path))
        if len(path) == max_vertices:
            return
        x, y = path[-1]
        for q in ((x + 1, y), (x - 1, y), (x, y + 1), (x, y - 1)):
            if q not in path:
                path.append(q)
                grow(path)
                path.pop()

    grow([(0, 0)])
    return out


def criterion_1():
    """passage_time == brute force on 500 random small boxes, every family."""
    fams = [DistributionSpec.constant_one(), DistributionSpec.two_point(0.6, 2), TP,
            DistributionSpec.one_plus_exp(1.3, p=0.4), DistributionSpec.one_plus_uniform(2.0, p=0.2)]
    rng = np.random.default_rng(derive_seed(SEED, "criterion-1"))
    t0 = time.time()
    bad = 0
    for k in range(500):
        w, h = int(rng.integers(1, 5)), int(rng.integers(1, 6))
        R = Region(0, w - 1, 0, h - 1)
        u = (int(rng.integers(0, w)), int(rng.integers(0, h)))
        v = (int(rng.integers(0, w)), int(rng.integers(0, h)))
        c = Configuration(int(rng.integers(0, 2**63)), fams[k % len(fams)], k)
        bad += passage_time(c, u, v, R).time != brute_force_passage(c, u, v, R)
    dt = time.time() - t0
    return bad == 0 and dt < 10, f"{bad} mismatches in 500 instances, {dt:.1f}s (limit 10s)"


def criterion_2():
    """No broken bridge <=> northeast or southeast, over all short self-avoiding paths."""
    t0 = time.time()
    counter, total = 0, 0
    for M in (2, 3):
        for p in _saws(2 * M):
            total += 1
            counter += (len(find_broken_bridges(p, M)) == 0) != (classify_ne_se(p) != "neither")
    dt = time.time() - t0
    return counter == 0 and dt < 60, f"{counter} counterexamples in {total} paths, {dt:.1f}s (limit 60s)"


def criterion_3():
    """Structural invariants on the bridge lists of 1000 geodesics, M cycling through 2..5."""
    viol = {}
    n_bridges = 0
    for r in range(1000):
        c = Configuration(derive_seed(SEED, "criterion-3"), TP, r)
        _, res = auto_region(c, (0, 0), (200, 0))
        bbl = find_broken_bridges(res.path, 2 + r % 4)
        n_bridges += len(bbl)
        for k, ok in check_invariants(bbl, c).items():
            viol[k] = viol.get(k, 0) + (not ok)
    total = sum(viol.values())
    return total == 0, f"{total} violations over 1000 geodesics ({n_bridges} bridges); per check {viol}"


def criterion_4():
    """Right-edge subadditivity, KS in law, and the E r_1 = 0 oracle at p = 1/2."""
    reps = np.arange(10_000)
    seed = derive_seed(SEED, "criterion-4")
    m, n = 40, 100
    rm, rn, rmn = two_param(0.8, seed, reps, m, n)
    finite = np.isfinite(rm) & np.isfinite(rmn)
    viol = int(np.sum(rn[finite] > rm[finite] + rmn[finite])) + int(np.sum(~finite & np.isfinite(rn)))
    fresh = right_edges(0.8, derive_seed(SEED, "criterion-4", "fresh"), reps, n - m)[:, -1]
    pv = ks_2samp(rmn[np.isfinite(rmn)], fresh[np.isfinite(fresh)]).pvalue
    r1 = right_edges(0.5, derive_seed(SEED, "criterion-4", "r1"), reps, 1)[:, 1]
    mean, se = r1.mean(), r1.std(ddof=1) / math.sqrt(len(r1))
    ok_a, ok_b, ok_c = viol == 0, pv > 1e-3, abs(mean) <= 3 * se
    detail = (f"[{'ok' if ok_a else 'FAIL'}] {viol} pathwise violations; "
              f"[{'ok' if ok_b else 'FAIL'}] KS p={pv:.3g}; "
              f"[{'ok' if ok_c else 'FAIL'}] E r_1(p=1/2) = {mean:.4f} +- {se:.4f} "
              f"({abs(mean) / se:.1f} SE from 0; exact value {expected_r1(0.5):.4f}, "
              f"{abs(mean - expected_r1(0.5)) / se:.1f} SE away)")
    return ok_a and ok_b and ok_c, detail


def criterion_5():
    """Axis variance slope CI above 0 and diagonal ratio below the pilot cap, in >= 9 of 10 seeds."""
    cap = PILOT["diagonal_ratio_cap"]
    n_list = (32, 64, 128, 256)
    hits, lines = 0, []
    for s in range(1, 11):
        ax = E.variance_scan(TP, "axis", n_list, 400, master_seed=s)
        dg = E.variance_scan(TP, "diagonal", (32, 256), 400, master_seed=s)
        ratio = dg.ratio(256, 32)
        ok = ax.slope.ci_low > 0 and ratio < cap
        hits += ok
        lines.append(f"seed {s}: slope CI [{ax.slope.ci_low:.2f}, {ax.slope.ci_high:.2f}], diag ratio {ratio:.2f}")
    return hits >= 9, f"{hits}/10 seeds pass (cap {cap}, pilot seed {PILOT['pilot_seed']}); " + "; ".join(lines)


def criterion_6():
    """1 + tan theta1 > mu(axis) with separated CIs; diagonal excess bounded in n."""
    fe = E.flat_edge_consistency(TP, 200, 400, 200, master_seed=SEED)
    ex = E.mean_diag_excess(TP, (50, 100, 200), 400, master_seed=SEED)
    common = intersect(ex.values())
    ok = fe.separated and common is not None
    exs = ", ".join(f"n={n}: {c.point:.3f} [{c.ci_low:.3f}, {c.ci_high:.3f}]" for n, c in ex.items())
    return ok, (f"1+tan(theta1) in [{fe.one_plus_tan.ci_low:.4f}, {fe.one_plus_tan.ci_high:.4f}] vs "
                f"mu(axis) in [{fe.mu.ci_low:.4f}, {fe.mu.ci_high:.4f}] (eta_hat {fe.eta_hat:.4f}); "
                f"diag excess {exs}; common interval {common}")


def criterion_7():
    """count_z / m stable across m in {60, 80, 100} at n = 200, and the renormalized bound on every replicate."""
    z = threshold_z(TP, delta3_of(0.5, 3, 1.0))
    rep = E.theorem1_experiment(TP, 200, (60, 80, 100), 3, z, 200, master_seed=SEED)
    m = np.array([r["m"] for r in rep.rows], dtype=float)
    c = np.array([r["count_z"] for r in rep.rows], dtype=float)
    cis = ", ".join(f"m={k}: {v.point:.4f} [{v.ci_low:.4f}, {v.ci_high:.4f}]" for k, v in rep.ratio_ci.items())
    ok = rep.stable() and rep.renorm_bound_all
    return ok, (f"{cis}; common interval {intersect(rep.ratio_ci.values())}; renorm_bound on all "
                f"{len(rep.rows)} rows: {rep.renorm_bound_all}; linear-fit slope of count_z on m {ols_slope(m, c):.4f}")


def criterion_8():
    """Same manifest => byte-identical results; worker count changes nothing."""
    with tempfile.TemporaryDirectory() as d, contextlib.redirect_stdout(io.StringIO()):
        d = Path(d)
        base = [["geodesic", "--n", "20,40", "--reps", "12", "--seed", "3"],
                ["theorem1", "--n", "60", "--m", "20,30", "--z", "2", "--reps", "8", "--seed", "3"],
                ["right-edge", "--n", "50,100", "--reps", "20", "--seed", "3"]]
        same = True
        for k, argv in enumerate(base):
            a, b, w = d / f"a{k}", d / f"b{k}", d / f"w{k}"
            codes = [cli.main(argv + ["--out", str(a)]),
                     cli.main([argv[0], "--config", str(a / "manifest.json"), "--out", str(b)]),
                     cli.main([argv[0], "--config", str(a / "manifest.json"), "--out", str(w), "--workers", "2"])]
            same &= codes == [0, 0, 0]
            for f in ("results.csv", "summary.json"):
                ref = (a / f).read_bytes()
                same &= (b / f).read_bytes() == ref and (w / f).read_bytes() == ref
    return bool(same), "geodesic, theorem1, right-edge: rerun from manifest and with 2 workers are byte-identical" \
        if same else "outputs differ between reruns"


CRITERIA = [criterion_1, criterion_2, criterion_3, criterion_4, criterion_5, criterion_6, criterion_7,
            criterion_8]


def _report(k, fn):
    t0 = time.time()
    ok, detail = fn()
    line = f"CRITERION {k}: {'PASS' if ok else 'FAIL'} ({time.time() - t0:.0f}s) {detail}"
    return ok, line


@pytest.mark.parametrize("k", range(1, 9))
def test_criterion(k, capsys):
    ok, line = _report(k, CRITERIA[k - 1])
    with capsys.disabled():
        print("\n" + line, flush=True)
    assert ok, line


if __name__ == "__main__":
    results = [_report(k, fn) for k, fn in enumerate(CRITERIA, 1)]
    for _, line in results:
        print(line)
    sys.exit(0 if all(ok for ok, _ in results) else 1)
