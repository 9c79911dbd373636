"""Monte Carlo estimators on top of the passage-time and right-edge engines.

Every replicate is one ``Configuration(seed, spec, r)`` where ``seed`` is
derived from the master seed and a label naming the quantity, so different
experiments never share edge fields unless they are meant to be coupled.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from functools import partial

import numpy as np

from . import stats
from .bridges import census, find_broken_bridges, mark_vertices
from .geodesics import RegionCertificationError, _label_setting, auto_line, auto_region, auto_time
from .oriented import estimate_alpha
from .pool import ordered_map
from .renorm import census_49, marked_count_z
from .stats import EstimateCI
from .weights import Configuration, DistributionSpec, derive_seed

SQRT2 = math.sqrt(2.0)

MU_CAVEAT = ("finite-n mean of T(0, n x)/n overestimates mu(x) in expectation "
             "(subadditivity makes mu the infimum over n)")


# ------------------------------------------------------------ directions


def round_to_lattice(x: float, y: float):
    """Nearest lattice point; ties go to the lexicographically smallest ``(x, y)``."""
    fx, fy = math.floor(x), math.floor(y)
    cands = [(a, b) for a in (fx, fx + 1) for b in (fy, fy + 1)]
    return min(cands, key=lambda q: ((q[0] - x) ** 2 + (q[1] - y) ** 2, q[0], q[1]))


def parse_direction(direction):
    """``'axis'``, ``'diagonal'``, a float angle, or ``'angle:<theta>'``."""
    if isinstance(direction, (int, float)):
        return float(direction)
    d = str(direction).strip().lower()
    if d in ("axis", "diagonal"):
        return d
    if d.startswith("angle:"):
        d = d[6:]
    try:
        return float(d)
    except ValueError:
        raise ValueError(f"unknown direction {direction!r}") from None


def direction_label(direction) -> str:
    d = parse_direction(direction)
    return d if isinstance(d, str) else f"angle:{d!r}"


def directional_target(n: int, direction):
    """Lattice target of the directional time: ``(n, 0)``, ``(n, n)`` or ``n (cos t, sin t)`` rounded."""
    d = parse_direction(direction)
    if d == "axis":
        return (int(n), 0)
    if d == "diagonal":
        return (int(n), int(n))
    return round_to_lattice(n * math.cos(d), n * math.sin(d))


# ------------------------------------------------------------ per-replicate tasks


def _point_time(spec, seed, target, r):
    cfg = Configuration(seed, spec, r)
    t, _ = auto_time(cfg, (0, 0), target)
    return t


def _line_time(spec, seed, n, r):
    cfg = Configuration(seed, spec, r)
    _, res = auto_line(cfg, (0, 0), n)
    return res.time


def directional_times(spec: DistributionSpec, direction, n: int, reps, seed: int, workers: int = 1) -> np.ndarray:
    """``T(0, target)`` for replicate indices ``reps`` (an int means ``range(reps)``)."""
    reps = range(reps) if isinstance(reps, int) else reps
    target = directional_target(n, direction)
    return np.array(ordered_map(partial(_point_time, spec, seed, target), reps, workers), dtype=float)


# ------------------------------------------------------------ time constant


@dataclass(frozen=True)
class MuEstimate(EstimateCI):
    direction: str = "axis"
    caveat: str = MU_CAVEAT


def estimate_mu(spec: DistributionSpec, direction, n: int, reps: int, master_seed: int = 0,
                workers: int = 1) -> MuEstimate:
    """Mean of ``T(0, n x)/n`` with a normal CI, where ``x`` is the direction's unit target."""
    if n < 50 or reps < 30:
        raise ValueError("estimate_mu needs n >= 50 and reps >= 30")
    label = direction_label(direction)
    seed = derive_seed(master_seed, "mu", label, int(n))
    t = directional_times(spec, direction, n, reps, seed, workers) / n
    ci = stats.mean_ci(t, seed=seed, n_used=n)
    return MuEstimate(ci.point, ci.ci_low, ci.ci_high, reps, n, seed, label)


# ------------------------------------------------------------ flat edge


def theta_flat(alpha_p: float):
    """Angles ``(theta1, theta2)`` bounding the flat edge, for speed ``alpha_p`` in flat-edge units."""
    if not (0.0 <= alpha_p <= 1.0 / SQRT2 + 1e-15):
        raise ValueError("alpha_p must lie in [0, 1/sqrt 2]")
    a = min(alpha_p, 1.0 / SQRT2) / SQRT2
    return math.atan2(0.5 - a, 0.5 + a), math.atan2(0.5 + a, 0.5 - a)


def one_plus_tan_theta1(alpha_p: float) -> float:
    # (1 + tan theta1)(1/2 + alpha_p/sqrt2) = 1
    return 1.0 / (0.5 + alpha_p / SQRT2)


@dataclass(frozen=True)
class FlatEdgeReport:
    mu: EstimateCI  # axis time constant
    alpha_L: EstimateCI  # right-edge speed, L units
    one_plus_tan: EstimateCI  # 1 + tan theta1
    alpha_status: str

    @property
    def eta_hat(self) -> float:
        return self.one_plus_tan.point - self.mu.point

    @property
    def delta1(self) -> float:
        return self.eta_hat / 100.0

    @property
    def separated(self) -> bool:
        return self.one_plus_tan.ci_low > self.mu.ci_high

    def to_record(self) -> dict:
        return {"mu": self.mu.to_record(), "alpha_L": self.alpha_L.to_record(),
                "one_plus_tan": self.one_plus_tan.to_record(), "alpha_status": self.alpha_status,
                "eta_hat": self.eta_hat, "delta1": self.delta1, "separated": self.separated}


def flat_edge_consistency(spec: DistributionSpec, n_mu: int, n_alpha: int, reps: int,
                          master_seed: int = 0, workers: int = 1) -> FlatEdgeReport:
    """Joint estimate of ``mu(axis)`` and ``1 + tan theta1`` from the right-edge speed.

    ``1 + tan theta1`` is decreasing in ``alpha``, so its CI is the image of
    the speed CI with the endpoints swapped.
    """
    mu = estimate_mu(spec, "axis", n_mu, reps, master_seed, workers)
    al = estimate_alpha(spec.p, n_alpha, reps, master_seed)
    if al.status == "subcritical":
        nan = float("nan")
        return FlatEdgeReport(mu, al.ci, EstimateCI(nan, nan, nan, reps, n_alpha, al.ci.seed), al.status)

    def opt(a_L):
        return one_plus_tan_theta1(min(max(a_L, 0.0), 1.0) / SQRT2)

    opt_ci = EstimateCI(opt(al.ci.point), opt(al.ci.ci_high), opt(al.ci.ci_low), reps, n_alpha, al.ci.seed)
    return FlatEdgeReport(mu, al.ci, opt_ci, al.status)


def eta_hat(one_plus_tan: float, mu: float) -> float:
    return one_plus_tan - mu


# ------------------------------------------------------------ variance scans


@dataclass
class VarianceScanResult:
    direction: str
    n_list: tuple
    variances: list  # EstimateCI per n
    slope: EstimateCI  # d var / d log n
    samples: np.ndarray = field(repr=False)  # (reps, len(n_list)) passage times
    seeds: tuple = ()

    def __post_init__(self):
        if any(b <= a for a, b in zip(self.n_list, self.n_list[1:])):
            raise ValueError("n_list must be strictly increasing")

    def ratio(self, n_hi: int, n_lo: int) -> float:
        i, j = self.n_list.index(n_hi), self.n_list.index(n_lo)
        return self.variances[i].point / self.variances[j].point

    def to_record(self) -> dict:
        return {"direction": self.direction, "n_list": list(self.n_list),
                "variances": [v.to_record() for v in self.variances], "slope": self.slope.to_record(),
                "seeds": list(self.seeds)}


def variance_seed(master_seed: int, direction, n: int) -> int:
    return derive_seed(master_seed, "variance-scan", direction_label(direction), int(n))


def variance_scan(spec: DistributionSpec, direction, n_list, reps: int, master_seed: int = 0,
                  workers: int = 1) -> VarianceScanResult:
    """Sample variance of the directional time per ``n`` and its slope against ``log n``.

    Each ``n`` uses its own derived seed, so the columns are independent.
    """
    n_list = tuple(int(n) for n in n_list)
    if reps < 200:
        raise ValueError("variance_scan needs reps >= 200")
    if any(n < 1 for n in n_list):
        raise ValueError("every n must be >= 1")
    if any(b <= a for a, b in zip(n_list, n_list[1:])):
        raise ValueError("n_list must be strictly increasing")
    seeds = tuple(variance_seed(master_seed, direction, n) for n in n_list)
    cols = [directional_times(spec, direction, n, reps, s, workers) for n, s in zip(n_list, seeds)]
    return summarize_variance(np.stack(cols, axis=1), n_list, direction, master_seed)


def summarize_variance(S, n_list, direction, master_seed: int = 0) -> VarianceScanResult:
    """Per-n jackknife variance CIs and the slope fit from a ``(reps, len(n_list))`` table."""
    S = np.asarray(S, dtype=float)
    n_list = tuple(int(n) for n in n_list)
    seeds = tuple(variance_seed(master_seed, direction, n) for n in n_list)
    variances = [stats.variance_ci(S[:, k], seed=seeds[k], n_used=n) for k, n in enumerate(n_list)]
    slope = stats.variance_slope_ci(S, n_list, seed=derive_seed(master_seed, "variance-scan"))
    return VarianceScanResult(direction_label(direction), n_list, variances, slope, S, seeds)


# ------------------------------------------------------------ concentration


@dataclass
class TailTable:
    n: int
    x: tuple
    freq_a: tuple  # point-to-point times
    freq_b: tuple  # point-to-line times
    a: np.ndarray = field(repr=False)
    b: np.ndarray = field(repr=False)

    def rows(self):
        return list(zip(self.x, self.freq_a, self.freq_b))


def _tail_freqs(sample, n, xs):
    dev = np.abs(sample - sample.mean())
    return tuple(float((dev >= x * math.sqrt(n)).mean()) for x in xs)


def concentration_check(spec: DistributionSpec, n: int, reps: int, x_list, master_seed: int = 0,
                        workers: int = 1) -> TailTable:
    """Empirical ``P(|a - mean a| >= x sqrt n)`` and the same for the line time ``b``.

    The a- and b-samples come from the same configurations.
    """
    if reps < 1000:
        raise ValueError("concentration_check needs reps >= 1000")
    xs = tuple(sorted(float(x) for x in x_list))
    seed = derive_seed(master_seed, "concentration", int(n))
    a = directional_times(spec, "axis", n, reps, seed, workers)
    b = np.array(ordered_map(partial(_line_time, spec, seed, n), range(reps), workers), dtype=float)
    return TailTable(n, xs, _tail_freqs(a, n, xs), _tail_freqs(b, n, xs), a, b)


def log_tail_slopes(xs, freqs):
    """Successive slopes of ``log freq`` against ``x`` over the positive entries."""
    pts = [(x, math.log(f)) for x, f in zip(xs, freqs) if f > 0]
    return [(b[1] - a[1]) / (b[0] - a[0]) for a, b in zip(pts, pts[1:])]


# ------------------------------------------------------------ shape


@dataclass
class ShapeEstimate:
    t: float
    angles: np.ndarray
    radius: np.ndarray  # Euclidean reach radius / t
    l1_radius: np.ndarray  # l1 norm of the reached lattice point / t
    reach_points: list
    rep_l1: np.ndarray = field(repr=False)  # (reps, n_angles) per-replicate l1 reach / t
    flat_tol: float = 0.0
    flat_angles: tuple = ()
    theta_pred: tuple | None = None

    def l1_ci(self, k: int) -> EstimateCI:
        return stats.mean_ci(self.rep_l1[:, k])

    def flat_report(self) -> dict:
        rep = {"flat_tol": self.flat_tol, "flat_extent": list(self.flat_angles) or None}
        if self.theta_pred is not None:
            rep["theta_pred"] = list(self.theta_pred)
        return rep


def ray_points(t: float, theta: float):
    """Lattice points ``round(rho (cos, sin))`` with l1 norm <= t, in increasing rho (step 1/4)."""
    c, s = math.cos(theta), math.sin(theta)
    pts = []
    rho = 0.0
    while True:
        q = round_to_lattice(rho * c, rho * s)
        if abs(q[0]) + abs(q[1]) > t:
            break
        if not pts or q != pts[-1]:
            pts.append(q)
        rho += 0.25
    return pts


@dataclass(frozen=True)
class ShapeGrid:
    t: float
    angles: tuple
    rays: tuple  # one tuple of lattice points per angle
    R: int  # half-width of the search box around the origin

    @classmethod
    def build(cls, t: float, n_angles: int, box_radius: int | None = None) -> "ShapeGrid":
        if t < 30 or n_angles < 2:
            raise ValueError("shape needs t >= 30 and at least 2 angles")
        angles = tuple(float(a) for a in np.linspace(0.0, math.pi / 2, n_angles))
        rays = tuple(tuple(ray_points(t, a)) for a in angles)
        return cls(float(t), angles, rays, int(box_radius or 2 * math.ceil(t) + 2))

    @property
    def points(self) -> list:
        return [q for ray in self.rays for q in ray]

    def slices(self):
        k = 0
        for ray in self.rays:
            yield slice(k, k + len(ray))
            k += len(ray)


def shape_replicate(spec, seed, grid: ShapeGrid, r) -> np.ndarray:
    """Passage times from the origin to every grid point for replicate ``r``."""
    cfg = Configuration(seed, spec, r)
    R = grid.R
    pts = grid.points
    h, v = cfg.region_times(-R, R, -R, R)
    d, _, _ = _label_setting(h, v, np.array([R]), np.array([R]), 0, 0, 0)
    ring = np.concatenate([d[0, :], d[-1, :], d[:, 0], d[:, -1]])
    vals = d[[q[0] + R for q in pts], [q[1] + R for q in pts]]
    # a path leaving the box passes a boundary vertex, then needs >= 2 more edges to return
    if np.any(vals >= ring.min() + 2 * cfg.min_weight):
        raise RegionCertificationError(f"shape box of radius {R} does not certify replicate {r}")
    return vals


def shape_seed(master_seed: int, t: float) -> int:
    return derive_seed(master_seed, "shape", float(t))


def shape_estimate(spec: DistributionSpec, t: float, reps: int, n_angles: int = 17, master_seed: int = 0,
                   box_radius: int | None = None, flat_tol: float | None = None, alpha_p: float | None = None,
                   workers: int = 1) -> ShapeEstimate:
    """Reach radius of ``B(t)`` along ``n_angles`` rays in ``[0, pi/2]``.

    For each ray the reach is the last sampled point whose mean passage time
    is at most ``t``. Every edge costs at least 1, so only points with l1
    norm at most ``t`` can qualify.
    """
    if reps < 2:
        raise ValueError("shape_estimate needs reps >= 2")
    grid = ShapeGrid.build(t, n_angles, box_radius)
    seed = shape_seed(master_seed, t)
    T = np.stack(ordered_map(partial(shape_replicate, spec, seed, grid), range(reps), workers))
    return shape_from_samples(grid, T, flat_tol, alpha_p)


def _last_within(times, t) -> int:
    ok = np.nonzero(times <= t)[0]
    return int(ok[-1]) if len(ok) else 0


def shape_from_samples(grid: ShapeGrid, T, flat_tol: float | None = None, alpha_p: float | None = None) -> ShapeEstimate:
    T = np.asarray(T, dtype=float)
    t = grid.t
    mean_T = T.mean(axis=0)
    radius, l1, reach = [], [], []
    rep_l1 = np.zeros((T.shape[0], len(grid.angles)))
    for a, (ray, sl) in enumerate(zip(grid.rays, grid.slices())):
        q = ray[_last_within(mean_T[sl], t)]
        reach.append(q)
        radius.append(math.hypot(*q) / t)
        l1.append((abs(q[0]) + abs(q[1])) / t)
        for r in range(T.shape[0]):
            qr = ray[_last_within(T[r, sl], t)]
            rep_l1[r, a] = (abs(qr[0]) + abs(qr[1])) / t
    tol = (2.0 / t) if flat_tol is None else float(flat_tol)
    angles = np.array(grid.angles)
    l1 = np.array(l1)
    on = angles[l1 >= 1.0 - tol]
    extent = (float(on.min()), float(on.max())) if len(on) else ()
    pred = theta_flat(alpha_p) if alpha_p is not None else None
    return ShapeEstimate(t, angles, np.array(radius), l1, reach, rep_l1, tol, extent, pred)


# ------------------------------------------------------------ census experiment


@dataclass
class Theorem1Report:
    n: int
    m_list: tuple
    M: int
    z: float
    rows: list  # dicts: rep, m, count, count_z, r_total, renorm_bound
    ratio_ci: dict  # m -> EstimateCI of count_z / m
    ratio_ci_all: dict  # m -> EstimateCI of count / m
    below: dict  # (m, delta) -> frequency of count_z <= delta m
    warnings: list = field(default_factory=list)

    @property
    def renorm_bound_all(self) -> bool:
        return all(r["renorm_bound"] for r in self.rows)

    def stable(self) -> bool:
        return stats.intersect(self.ratio_ci.values()) is not None

    def to_record(self) -> dict:
        return {"n": self.n, "m_list": list(self.m_list), "M": self.M, "z": self.z,
                "ratio_ci": {str(m): c.to_record() for m, c in self.ratio_ci.items()},
                "ratio_ci_all": {str(m): c.to_record() for m, c in self.ratio_ci_all.items()},
                "below": [[m, d, f] for (m, d), f in sorted(self.below.items())],
                "renorm_bound_all": self.renorm_bound_all, "stable": self.stable(), "warnings": self.warnings}


def window_warnings(n: int, m_list) -> list:
    out = []
    for m in m_list:
        if not n ** (2.0 / 3.0) <= m <= n / 2:
            out.append(f"m={m} outside the window n^(2/3) <= m <= n/2 for n={n}")
    return out


def theorem1_seed(master_seed: int, n: int) -> int:
    return derive_seed(master_seed, "theorem1", int(n))


def census_replicate(spec, seed, n, m_list, M, z, r) -> list:
    """Census rows (one per ``m``) for the axis geodesic of replicate ``r``."""
    cfg = Configuration(seed, spec, r)
    _, res = auto_region(cfg, (0, 0), (n, 0))
    bbl = find_broken_bridges(res.path, M)
    marks = mark_vertices(res.path, cfg, M, z, bbl)
    rows = []
    for m in m_list:
        c, cz = census(marks, m)
        R = census_49(marks, M, m)
        tot = sum(R.values())
        rows.append({"rep": r, "m": m, "count": c, "count_z": cz, "r_total": tot,
                     "renorm_bound": tot * M * M >= marked_count_z(marks, m)})
    return rows


def theorem1_experiment(spec: DistributionSpec, n: int, m_list, M: int, z: float, reps: int,
                        master_seed: int = 0, deltas=None, workers: int = 1) -> Theorem1Report:
    """Marked-vertex census of the axis geodesic ``0 -> (n, 0)`` inside ``B(m)``.

    ``deltas`` defaults to half the observed mean of ``count_z / m`` at the
    largest ``m``.
    """
    m_list = tuple(int(m) for m in m_list)
    if n < 2 or M < 1 or reps < 3 or not m_list or min(m_list) < 1:
        raise ValueError("need n >= 2, M >= 1, reps >= 3 and m >= 1")
    if z <= 1:
        raise ValueError("z must exceed 1")
    warns = window_warnings(n, m_list)
    for w in warns:
        warnings.warn(w, stacklevel=2)
    seed = theorem1_seed(master_seed, n)
    per = ordered_map(partial(census_replicate, spec, seed, n, m_list, M, float(z)), range(reps), workers)
    rows = [row for rep_rows in per for row in rep_rows]
    return summarize_census(rows, n, m_list, M, z, seed, deltas, warns)


def summarize_census(rows, n, m_list, M, z, seed=0, deltas=None, warns=()) -> Theorem1Report:
    ratio_ci, ratio_all = {}, {}
    for m in m_list:
        cz = np.array([r["count_z"] for r in rows if r["m"] == m], dtype=float) / m
        ca = np.array([r["count"] for r in rows if r["m"] == m], dtype=float) / m
        ratio_ci[m] = _jackknife_mean_ci(cz, seed, n)
        ratio_all[m] = _jackknife_mean_ci(ca, seed, n)
    if deltas is None:
        deltas = (0.5 * ratio_ci[max(m_list)].point,)
    below = {}
    for m in m_list:
        cz = np.array([r["count_z"] for r in rows if r["m"] == m], dtype=float)
        for d in deltas:
            below[(m, float(d))] = float((cz <= d * m).mean())
    return Theorem1Report(int(n), tuple(m_list), int(M), float(z), list(rows), ratio_ci, ratio_all, below, list(warns))


def _jackknife_mean_ci(x, seed, n_used) -> EstimateCI:
    """Delete-one jackknife CI for a mean (it reduces to the usual standard error)."""
    x = np.asarray(x, dtype=float)
    k = len(x)
    loo = (x.sum() - x) / (k - 1)
    se = math.sqrt((k - 1) / k * ((loo - loo.mean()) ** 2).sum())
    m = float(x.mean())
    return EstimateCI(m, m - stats.Z95 * se, m + stats.Z95 * se, k, n_used, seed)


# ------------------------------------------------------------ small helpers


def mean_diag_excess(spec: DistributionSpec, n_list, reps: int, master_seed: int = 0, workers: int = 1) -> dict:
    """CI of ``mean(T(0, (n, n)) - 2n)`` per ``n``."""
    out = {}
    for n in n_list:
        seed = derive_seed(master_seed, "diag-excess", int(n))
        t = directional_times(spec, "diagonal", n, reps, seed, workers) - 2 * n
        out[int(n)] = stats.mean_ci(t, seed=seed, n_used=n)
    return out

