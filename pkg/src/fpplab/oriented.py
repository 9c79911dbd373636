"""Oriented percolation on the rotated lattice and its right edge.

Sites of L are ``(x, k)`` with ``x + k`` even; the site corresponds to the
square-lattice vertex ``((x + k) / 2, (k - x) / 2)``. The L-edge to
``(x + 1, k + 1)`` is the horizontal lattice edge at that vertex and the L-edge
to ``(x - 1, k + 1)`` the vertical one. An L-edge is open when the edge's
uniform is below ``p``, which is exactly the event ``t(e) = 1`` for a
configuration with ``F(1) = p`` on the same seed.

Right edges start from the half-line ``(-inf, 0]``. Only a window of width
``W`` behind the deterministic envelope is simulated: a site below
``x_hi - W - 1 + j`` at step ``j`` can only reach sites that are below the
same bound later, so every value the window reports is exact, and a level on
which the window is empty is reported as ``-inf`` (not certified).
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction

import numba
import numpy as np

from .weights import stream_key

NEG_INF = float("-inf")

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_OFF = np.int64(1 << 30)


@numba.njit(cache=True, inline="always")
def _mix(z):
    z = z + _GOLDEN
    z = (z ^ (z >> np.uint64(30))) * _M1
    z = (z ^ (z >> np.uint64(27))) * _M2
    return z ^ (z >> np.uint64(31))


@numba.njit(cache=True, inline="always")
def _uniform(key, a, b, o):
    counter = (np.uint64(a + _OFF) << np.uint64(32)) | (np.uint64(b + _OFF) << np.uint64(1)) | np.uint64(o)
    h = _mix(_mix(counter ^ key) + key)
    return np.float64(h >> np.uint64(11)) * (1.0 / 9007199254740992.0)


@numba.njit(cache=True)
def _evolve(keys, p, x_hi, level0, n_levels, W):
    R = keys.shape[0]
    out = np.full((R, n_levels + 1), -np.inf)
    base = x_hi - W - 1  # array index 0 <-> x = base
    size = W + n_levels + 3
    for r in range(R):
        key = keys[r]
        cur = np.zeros(size, dtype=np.bool_)
        nxt = np.zeros(size, dtype=np.bool_)
        for x in range(x_hi - 2 * (W // 2), x_hi + 1, 2):
            cur[x - base] = True
        out[r, 0] = x_hi
        hi_occ = x_hi
        for j in range(n_levels):
            lev = level0 + j
            lo = x_hi - W - 1 + j
            nxt[:] = False
            found = False
            new_hi = lo
            # parity: occupied x satisfy x + lev even
            start = lo if (lo + lev) % 2 == 0 else lo + 1
            for x in range(start, hi_occ + 1, 2):
                if not cur[x - base]:
                    continue
                a = (x + lev) // 2
                b = (lev - x) // 2
                if _uniform(key, a, b, 0) < p:
                    nxt[x + 1 - base] = True
                    found = True
                    if x + 1 > new_hi:
                        new_hi = x + 1
                if x - 1 >= lo + 1 and _uniform(key, a, b, 1) < p:
                    nxt[x - 1 - base] = True
                    found = True
                    if x - 1 > new_hi:
                        new_hi = x - 1
            if not found:
                break
            out[r, j + 1] = new_hi
            hi_occ = new_hi
            cur, nxt = nxt, cur
    return out


def _default_window(n):
    # 4n behind the envelope; at least 64 so short runs are not window-limited
    return max(4 * n, 64)


def _keys(master_seed, reps):
    return stream_key(master_seed, np.asarray(reps, dtype=np.int64))


def right_edges(p: float, master_seed: int, reps, n: int, window: int | None = None) -> np.ndarray:
    """``r_0..r_n`` for each replicate index in ``reps``; shape ``(len(reps), n + 1)``."""
    if n < 0:
        raise ValueError("n must be >= 0")
    if not 0.0 <= p <= 1.0:
        raise ValueError("p must lie in [0, 1]")
    W = _default_window(n) if window is None else int(window)
    reps = np.atleast_1d(np.asarray(reps, dtype=np.int64))
    return _evolve(_keys(master_seed, reps), float(p), 0, 0, int(n), W)


def two_param(p: float, master_seed: int, reps, m: int, n: int, window: int | None = None):
    """Coupled ``(r_m, r_n, r_{m,n})`` arrays from one configuration per replicate.

    ``r_{m,n}`` restarts at level ``m`` from every site ``y <= r_m`` and is
    measured relative to ``r_m``; it is ``-inf`` when ``r_m`` is.
    """
    if not 0 <= m < n:
        raise ValueError("need 0 <= m < n")
    reps = np.atleast_1d(np.asarray(reps, dtype=np.int64))
    W = _default_window(n) if window is None else int(window)
    keys = _keys(master_seed, reps)
    full = _evolve(keys, float(p), 0, 0, int(n), W)
    rm = full[:, m]
    rn = full[:, n]
    rmn = np.full(len(reps), NEG_INF)
    Wr = _default_window(n - m) if window is None else int(window)
    for i in range(len(reps)):
        if np.isfinite(rm[i]):
            tr = _evolve(keys[i:i + 1], float(p), int(rm[i]), int(m), int(n - m), Wr)
            rmn[i] = tr[0, -1] - rm[i]
    return rm, rn, rmn


@dataclass(frozen=True)
class OrientedConfig:
    p: float
    master_seed: int
    replicate_index: int = 0

    def __post_init__(self):
        if not 0.0 <= self.p <= 1.0:
            raise ValueError("p must lie in [0, 1]")

    @classmethod
    def from_configuration(cls, config) -> "OrientedConfig":
        return cls(config.distribution.p, config.master_seed, config.replicate_index)

    def edge_open(self, x: int, k: int, direction: int) -> bool:
        """Whether the L-edge from ``(x, k)`` to ``(x + direction, k + 1)`` is open."""
        if (x + k) % 2:
            raise ValueError("not a site of L")
        a, b = (x + k) // 2, (k - x) // 2
        key = stream_key(self.master_seed, self.replicate_index)[0]
        return bool(_uniform(key, a, b, 0 if direction > 0 else 1) < self.p)


@dataclass(frozen=True)
class RightEdgeTrace:
    values: tuple  # floats; -inf marks an empty (uncertified) window

    def __len__(self):
        return len(self.values)

    def __getitem__(self, k):
        return self.values[k]

    def to_csv(self) -> str:
        rows = ["level,r"] + [f"{k},{_fmt(v)}" for k, v in enumerate(self.values)]
        return "\n".join(rows) + "\n"


def _fmt(v) -> str:
    return "-inf" if v == NEG_INF else str(int(v))


def evolve_right_edge(oc: OrientedConfig, n: int, window: int | None = None) -> RightEdgeTrace:
    r = right_edges(oc.p, oc.master_seed, [oc.replicate_index], n, window)[0]
    return RightEdgeTrace(tuple(float(v) for v in r))


def r_two_param(oc: OrientedConfig, m: int, n: int, window: int | None = None) -> float:
    return float(two_param(oc.p, oc.master_seed, [oc.replicate_index], m, n, window)[2][0])


def expected_r1(p: float) -> float:
    """Closed form of ``E r_1``: the edges into sites ``1, -1, ..., 1 - 2k`` number ``2k + 1``."""
    q = 1.0 - p
    if p == 0.0:
        return NEG_INF
    return 1.0 - 2.0 * q / (1.0 - q * q)


def slope(u, v) -> Fraction:
    if v[0] == u[0]:
        raise ZeroDivisionError("vertical pair has no slope")
    return Fraction(v[1] - u[1], v[0] - u[0])


def to_flat_edge_units(alpha_L: float) -> float:
    """Right-edge speed in L units (1 at p = 1) to the flat-edge convention (max 1/sqrt 2)."""
    return alpha_L / math.sqrt(2.0)


# ------------------------------------------------------------ lowest NE 1-path


class RegionTooSmall(RuntimeError):
    pass


def lowest_ne_one_path(config, u, target_x: int, region):
    """Lowest northeast path of 1-edges from ``u`` to the line ``x = target_x``.

    Returns a LatticePath, or None when no such path exists. Raises
    RegionTooSmall when none exists inside ``region`` but some northeast
    1-path from ``u`` reaches the region's top row, so nonexistence is not
    certified.
    """
    from .geodesics import LatticePath

    ux, uy = u
    if target_x <= ux:
        raise ValueError("target_x must exceed u.x")
    if not (region.contains(u) and region.x_min <= target_x <= region.x_max):
        raise ValueError("region must contain u and span the target line")
    h, v = config.region_times(ux, target_x, uy, region.y_max)
    W, H = target_x - ux + 1, region.y_max - uy + 1
    h1, v1 = h == 1.0, v == 1.0
    good = np.zeros((W, H), dtype=bool)  # a NE 1-path to the line starts here
    top = np.zeros((W, H), dtype=bool)  # a NE 1-path to the top row starts here
    good[W - 1, :] = True
    top[: W - 1, H - 1] = True
    for i in range(W - 2, -1, -1):
        for j in range(H - 1, -1, -1):
            up = j + 1 < H and v1[i, j]
            good[i, j] = (h1[i, j] and good[i + 1, j]) or (up and good[i, j + 1])
            if j < H - 1:
                top[i, j] = (h1[i, j] and i + 1 < W - 1 and top[i + 1, j]) or (up and top[i, j + 1])
    if not good[0, 0]:
        if top[0, 0]:
            raise RegionTooSmall("region too small to certify that no northeast 1-path exists")
        return None
    i = j = 0
    out = [(ux, uy)]
    while i < W - 1:
        if h1[i, j] and good[i + 1, j]:
            i += 1
        else:
            j += 1
        out.append((ux + i, uy + j))
    return LatticePath(out)


# ------------------------------------------------------------ speed estimate


@dataclass(frozen=True)
class AlphaEstimate:
    """``mean(r_n) / n`` in L units with its bootstrap CI and a regime label."""

    ci: object  # EstimateCI
    status: str  # supercritical | inconclusive | subcritical
    n_neg_inf: int

    @property
    def point(self) -> float:
        return self.ci.point


def estimate_alpha(p: float, n: int, reps: int, master_seed: int = 0, n_boot: int = 2000) -> AlphaEstimate:
    from .stats import EstimateCI, bootstrap_mean_ci
    from .weights import derive_seed

    if n < 100 or reps < 30:
        raise ValueError("estimate_alpha needs n >= 100 and reps >= 30")
    seed = derive_seed(master_seed, "alpha", float(p), int(n))
    r = right_edges(p, seed, np.arange(reps), n)[:, -1]
    n_inf = int(np.isinf(r).sum())
    if n_inf:
        # an empty window means r_n < -3n, far outside the supercritical regime
        ci = EstimateCI(NEG_INF, NEG_INF, NEG_INF, reps, n, seed)
        return AlphaEstimate(ci, "subcritical", n_inf)
    rng = np.random.default_rng(seed)
    ci = bootstrap_mean_ci(r / n, rng, n_boot, seed=seed, n_used=n)
    return AlphaEstimate(ci, "supercritical" if ci.ci_low > 0 else "inconclusive", 0)
