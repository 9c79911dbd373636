"""Small statistics toolkit: jackknife and bootstrap intervals, slope fits."""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np
from scipy import stats as sps

Z95 = float(sps.norm.ppf(0.975))


@dataclass(frozen=True)
class EstimateCI:
    point: float
    ci_low: float
    ci_high: float
    reps: int
    n_used: int = 0
    seed: int = 0

    def __post_init__(self):
        if not (math.isnan(self.point) or self.ci_low <= self.point <= self.ci_high):
            raise ValueError(f"point {self.point} outside [{self.ci_low}, {self.ci_high}]")

    @property
    def half_width(self) -> float:
        return 0.5 * (self.ci_high - self.ci_low)

    def excludes(self, value: float) -> bool:
        return value < self.ci_low or value > self.ci_high

    def overlaps(self, other: "EstimateCI") -> bool:
        return self.ci_low <= other.ci_high and other.ci_low <= self.ci_high

    def to_record(self) -> dict:
        return asdict(self)


def mean_ci(x, seed: int = 0, n_used: int = 0) -> EstimateCI:
    """Normal-approximation CI for a mean."""
    x = np.asarray(x, dtype=float)
    m = float(x.mean())
    se = float(x.std(ddof=1) / math.sqrt(len(x))) if len(x) > 1 else 0.0
    return EstimateCI(m, m - Z95 * se, m + Z95 * se, len(x), n_used, seed)


def bootstrap_mean_ci(x, rng: np.random.Generator, n_boot: int = 2000, seed: int = 0,
                      n_used: int = 0) -> EstimateCI:
    """Percentile bootstrap CI for a mean; the point is the sample mean."""
    x = np.asarray(x, dtype=float)
    m = float(x.mean())
    idx = rng.integers(0, len(x), size=(n_boot, len(x)))
    boots = x[idx].mean(axis=1)
    lo, hi = np.quantile(boots, [0.025, 0.975])
    return EstimateCI(m, min(float(lo), m), max(float(hi), m), len(x), n_used, seed)


def jackknife_variance(x):
    """Unbiased sample variance and its delete-one jackknife standard error.

    Leave-one-out variances come from closed-form updates of the sum and sum
    of squares, so the cost is linear in the sample size.
    """
    x = np.asarray(x, dtype=float)
    n = len(x)
    if n < 3:
        raise ValueError("need at least 3 samples")
    c = x - x.mean()  # centring keeps the closed form well conditioned
    s1, s2 = c.sum(), (c * c).sum()
    l1 = s1 - c
    l2 = s2 - c * c
    loo = (l2 - l1 * l1 / (n - 1)) / (n - 2)
    var = float(s2 / (n - 1) - s1 * s1 / (n * (n - 1)))
    se = float(math.sqrt((n - 1) / n * ((loo - loo.mean()) ** 2).sum()))
    return var, se, loo


def variance_ci(x, seed: int = 0, n_used: int = 0) -> EstimateCI:
    var, se, _ = jackknife_variance(x)
    return EstimateCI(var, var - Z95 * se, var + Z95 * se, len(x), n_used, seed)


def ols_slope(x, y) -> float:
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    xc = x - x.mean()
    return float((xc * (y - y.mean())).sum() / (xc * xc).sum())


def variance_slope_ci(samples, n_list, seed: int = 0) -> EstimateCI:
    """Slope of sample variance against ``log n`` with a jackknife CI.

    ``samples`` has shape ``(reps, len(n_list))``. Each column's replicates are
    independent draws; the jackknife deletes replicate row ``i`` from every
    column at once, which is valid because the columns are independent.
    """
    S = np.asarray(samples, dtype=float)
    R = S.shape[0]
    logn = np.log(np.asarray(n_list, dtype=float))
    vars_, loos = [], []
    for k in range(S.shape[1]):
        v, _, loo = jackknife_variance(S[:, k])
        vars_.append(v)
        loos.append(loo)
    point = ols_slope(logn, vars_)
    L = np.stack(loos, axis=1)  # (R, K)
    xc = logn - logn.mean()
    loo_slopes = (L - L.mean(axis=1, keepdims=True)) @ xc / (xc * xc).sum()
    se = math.sqrt((R - 1) / R * ((loo_slopes - loo_slopes.mean()) ** 2).sum())
    return EstimateCI(point, point - Z95 * se, point + Z95 * se, R, int(max(n_list)), seed)


def intersect(cis) -> tuple | None:
    """Common intersection of CIs, or None when it is empty."""
    lo = max(c.ci_low for c in cis)
    hi = min(c.ci_high for c in cis)
    return (lo, hi) if lo <= hi else None
