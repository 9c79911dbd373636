"""Passage times and the selected optimal path on finite boxes.

Shortest paths come from a label-setting search on the box graph. The
optimal path is then chosen by walking forward from the start vertex over
edges that stay optimal, preferring at each step the neighbour closest to
the X-axis (ties: smaller y, then smaller x).

A box result is *certified* when every path that leaves the box is provably
more expensive than the best path inside it. Because every edge costs at
least 1, a path leaving through boundary vertex ``w`` costs at least
``|u - w|_1 + 2 + d(w, v)``; if that exceeds the box optimum for every ``w``,
all optimal paths of the infinite lattice lie in the box and the selected
path is the same in every larger box.
"""
from __future__ import annotations

import heapq
import json
import math
from dataclasses import dataclass
from typing import NamedTuple

import numba
import numpy as np

from .weights import path_edge_times

_TIGHT_TOL = 1e-9


class RegionCertificationError(RuntimeError):
    """The search box kept growing past its cap without certifying the result."""


class Vertex(NamedTuple):
    x: int
    y: int


@dataclass(frozen=True)
class Region:
    x_min: int
    x_max: int
    y_min: int
    y_max: int

    def __post_init__(self):
        if self.x_min > self.x_max or self.y_min > self.y_max:
            raise ValueError(f"empty region {self}")

    @classmethod
    def around(cls, points, margin: int) -> "Region":
        xs = [p[0] for p in points]
        ys = [p[1] for p in points]
        return cls(min(xs) - margin, max(xs) + margin, min(ys) - margin, max(ys) + margin)

    @property
    def width(self) -> int:
        return self.x_max - self.x_min + 1

    @property
    def height(self) -> int:
        return self.y_max - self.y_min + 1

    @property
    def n_vertices(self) -> int:
        return self.width * self.height

    def contains(self, p) -> bool:
        return self.x_min <= p[0] <= self.x_max and self.y_min <= p[1] <= self.y_max

    def margin_of(self, p) -> int:
        return min(p[0] - self.x_min, self.x_max - p[0], p[1] - self.y_min, self.y_max - p[1])

    def as_list(self):
        return [self.x_min, self.x_max, self.y_min, self.y_max]


class LatticePath:
    """A nearest-neighbour vertex sequence ``v_0, ..., v_k``."""

    __slots__ = ("vertices",)

    def __init__(self, vertices):
        self.vertices = tuple(Vertex(int(x), int(y)) for x, y in vertices)
        if not self.vertices:
            raise ValueError("a path has at least one vertex")
        for a, b in zip(self.vertices, self.vertices[1:]):
            if abs(a.x - b.x) + abs(a.y - b.y) != 1:
                raise ValueError(f"{a} -> {b} is not a lattice step")

    def __len__(self):
        return len(self.vertices)

    def __iter__(self):
        return iter(self.vertices)

    def __getitem__(self, i):
        return self.vertices[i]

    def __eq__(self, other):
        return isinstance(other, LatticePath) and self.vertices == other.vertices

    def __hash__(self):
        return hash(self.vertices)

    def __repr__(self):
        return f"LatticePath({list(map(tuple, self.vertices))})"

    @property
    def start(self) -> Vertex:
        return self.vertices[0]

    @property
    def end(self) -> Vertex:
        return self.vertices[-1]

    @property
    def n_edges(self) -> int:
        return len(self.vertices) - 1

    def is_self_avoiding(self) -> bool:
        return len(set(self.vertices)) == len(self.vertices)

    def edge_times(self, config) -> np.ndarray:
        return path_edge_times(config, self.vertices)

    def passage_time(self, config) -> float:
        return math.fsum(self.edge_times(config).tolist())

    def reversed(self) -> "LatticePath":
        return LatticePath(self.vertices[::-1])

    def to_csv(self) -> str:
        rows = ["index,x,y"] + [f"{i},{v.x},{v.y}" for i, v in enumerate(self.vertices)]
        return "\n".join(rows) + "\n"


@dataclass(frozen=True)
class PassageResult:
    time: float
    path: LatticePath
    region_used: Region
    boundary_margin: int
    certified: bool = True

    def to_record(self) -> dict:
        return {
            "time": self.time,
            "path": [[v.x, v.y] for v in self.path],
            "region": self.region_used.as_list(),
            "boundary_margin": self.boundary_margin,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_record())


# ---------------------------------------------------------------- kernels


@numba.njit(cache=True)
def _label_setting(h, v, src_i, src_j, stop_mode, ti, tj):
    # stop_mode: 0 exhaust, 1 stop when (ti, tj) is settled, 2 stop on column ti
    W = v.shape[0]
    H = h.shape[1]
    d = np.full((W, H), np.inf)
    settled = np.zeros((W, H), dtype=np.bool_)
    heap = [(0.0, 0)]
    heap.pop()
    for k in range(src_i.shape[0]):
        d[src_i[k], src_j[k]] = 0.0
        heapq.heappush(heap, (0.0, src_i[k] * H + src_j[k]))
    stop = -1
    while len(heap) > 0:
        dd, key = heapq.heappop(heap)
        i = key // H
        j = key - i * H
        if settled[i, j]:
            continue
        settled[i, j] = True
        if stop_mode == 1 and i == ti and j == tj:
            stop = key
            break
        if stop_mode == 2 and i == ti:
            stop = key
            break
        if i + 1 < W:
            nd = dd + h[i, j]
            if nd < d[i + 1, j]:
                d[i + 1, j] = nd
                heapq.heappush(heap, (nd, key + H))
        if i > 0:
            nd = dd + h[i - 1, j]
            if nd < d[i - 1, j]:
                d[i - 1, j] = nd
                heapq.heappush(heap, (nd, key - H))
        if j + 1 < H:
            nd = dd + v[i, j]
            if nd < d[i, j + 1]:
                d[i, j + 1] = nd
                heapq.heappush(heap, (nd, key + 1))
        if j > 0:
            nd = dd + v[i, j - 1]
            if nd < d[i, j - 1]:
                d[i, j - 1] = nd
                heapq.heappush(heap, (nd, key - 1))
    return d, settled, stop


@numba.njit(cache=True)
def _astar(h, v, si, sj, ti, tj, w0, tol):
    # Label setting with the admissible l1 heuristic ``w0 |. - target|_1``.
    # After the target settles, keep going until the smallest key exceeds its
    # distance, so every vertex of every optimal path is settled.
    W = v.shape[0]
    H = h.shape[1]
    d = np.full((W, H), np.inf)
    settled = np.zeros((W, H), dtype=np.bool_)
    d[si, sj] = 0.0
    heap = [(w0 * (abs(si - ti) + abs(sj - tj)), si * H + sj)]
    limit = np.inf
    while len(heap) > 0:
        f, key = heapq.heappop(heap)
        if f > limit:
            break
        i = key // H
        j = key - i * H
        if settled[i, j]:
            continue
        settled[i, j] = True
        dd = d[i, j]
        if i == ti and j == tj:
            limit = dd + tol * max(1.0, dd)
        for k in range(4):
            if k == 0:
                ni, nj = i + 1, j
                if ni >= W:
                    continue
                t = h[i, j]
            elif k == 1:
                ni, nj = i - 1, j
                if ni < 0:
                    continue
                t = h[ni, j]
            elif k == 2:
                ni, nj = i, j + 1
                if nj >= H:
                    continue
                t = v[i, j]
            else:
                ni, nj = i, j - 1
                if nj < 0:
                    continue
                t = v[i, nj]
            nd = dd + t
            if nd < d[ni, nj]:
                d[ni, nj] = nd
                heapq.heappush(heap, (nd + w0 * (abs(ni - ti) + abs(nj - tj)), ni * H + nj))
    return d, settled


@numba.njit(cache=True)
def _tight_walk(h, v, d, settled, i0, j0, x0, y0, tol):
    # Forward walk from (i0, j0) to a zero of d along tight edges; among tight
    # successors pick the one minimising (|y|, y, x) in global coordinates.
    W = v.shape[0]
    H = h.shape[1]
    out_i = np.empty(W * H, dtype=np.int64)
    out_j = np.empty(W * H, dtype=np.int64)
    i, j = i0, j0
    n = 0
    out_i[0] = i
    out_j[0] = j
    n = 1
    while d[i, j] > 0.0:
        if n >= W * H:
            return out_i[:0], out_j[:0]
        dc = d[i, j]
        slack = tol * max(1.0, dc)
        best_i = -1
        best_j = -1
        best_ay = 0
        best_y = 0
        best_x = 0
        for k in range(4):
            if k == 0:
                ni, nj = i + 1, j
                if ni >= W:
                    continue
                t = h[i, j]
            elif k == 1:
                ni, nj = i - 1, j
                if ni < 0:
                    continue
                t = h[ni, j]
            elif k == 2:
                ni, nj = i, j + 1
                if nj >= H:
                    continue
                t = v[i, j]
            else:
                ni, nj = i, j - 1
                if nj < 0:
                    continue
                t = v[i, nj]
            if not settled[ni, nj]:
                continue
            if abs(d[ni, nj] + t - dc) > slack:
                continue
            gx = x0 + ni
            gy = y0 + nj
            ay = abs(gy)
            if best_i < 0 or ay < best_ay or (ay == best_ay and (gy < best_y or (gy == best_y and gx < best_x))):
                best_i, best_j, best_ay, best_y, best_x = ni, nj, ay, gy, gx
        if best_i < 0:
            return out_i[:0], out_j[:0]
        i, j = best_i, best_j
        out_i[n] = i
        out_j[n] = j
        n += 1
    return out_i[:n], out_j[:n]


def _boundary_mask(shape):
    m = np.zeros(shape, dtype=bool)
    m[0, :] = m[-1, :] = m[:, 0] = m[:, -1] = True
    return m


def _exit_bound(region: Region, d, settled, anchor, skip_col: int = -1, w0: float = 1.0) -> float:
    """Lower bound on any path that leaves ``region``, from distances ``d``.

    ``d`` holds distances from one end inside the box; ``anchor`` is the other
    end. Unsettled boundary vertices are at least as far as the stopping
    distance and are ignored by the caller's strict comparison.
    """
    mask = _boundary_mask(d.shape) & settled
    if skip_col >= 0:
        mask[skip_col, :] = False
    if not mask.any():
        return math.inf
    ii, jj = np.nonzero(mask)
    l1 = np.abs(region.x_min + ii - anchor[0]) + np.abs(region.y_min + jj - anchor[1])
    return float(np.min(w0 * (l1 + 2) + d[ii, jj]))


def _check_endpoints(region: Region, *pts):
    for p in pts:
        if not region.contains(p):
            raise ValueError(f"vertex {tuple(p)} outside region {region}")


def _walk_to_path(region, h, v, d, settled, start) -> LatticePath:
    ii, jj = _tight_walk(h, v, d, settled, start[0] - region.x_min, start[1] - region.y_min,
                         region.x_min, region.y_min, _TIGHT_TOL)
    if len(ii) == 0:
        raise RuntimeError("tight-edge walk failed; distance field inconsistent")
    return LatticePath(zip((ii + region.x_min).tolist(), (jj + region.y_min).tolist()))


def _path_sum(h, v, region: Region, path: LatticePath) -> float:
    # fsum is correctly rounded, so the total does not depend on traversal direction
    ts = []
    for a, b in zip(path.vertices, path.vertices[1:]):
        i, j = min(a.x, b.x) - region.x_min, min(a.y, b.y) - region.y_min
        ts.append(float(h[i, j] if a.y == b.y else v[i, j]))
    return math.fsum(ts)


def passage_time(config, u, v, region: Region) -> PassageResult:
    """Point-to-point passage time inside ``region`` with the selected optimal path."""
    u, v = Vertex(*u), Vertex(*v)
    _check_endpoints(region, u, v)
    h, w = config.region_times(region.x_min, region.x_max, region.y_min, region.y_max)
    return _passage_from_arrays(h, w, region, u, v, _min_weight(config))


def _min_weight(config) -> float:
    return float(getattr(config, "min_weight", 1.0))


def _passage_from_arrays(h, w, region, u, v, w0=1.0) -> PassageResult:
    d, settled = _astar(h, w, v.x - region.x_min, v.y - region.y_min, u.x - region.x_min, u.y - region.y_min,
                        w0, _TIGHT_TOL)
    best = d[u.x - region.x_min, u.y - region.y_min]
    certified = _exit_bound(region, d, settled, u, w0=w0) > best
    path = _walk_to_path(region, h, w, d, settled, u)
    margin = min(region.margin_of(p) for p in path)
    return PassageResult(_path_sum(h, w, region, path), path, region, margin, bool(certified))


def passage_time_only(config, u, v, region: Region):
    """Fast path for estimators: ``(time, certified)`` without building the path."""
    u, v = Vertex(*u), Vertex(*v)
    _check_endpoints(region, u, v)
    h, w = config.region_times(region.x_min, region.x_max, region.y_min, region.y_max)
    w0 = _min_weight(config)
    d, settled = _astar(h, w, u.x - region.x_min, u.y - region.y_min, v.x - region.x_min, v.y - region.y_min,
                        w0, _TIGHT_TOL)
    best = float(d[v.x - region.x_min, v.y - region.y_min])
    certified = _exit_bound(region, d, settled, v, w0=w0) > best
    path = _walk_to_path(region, h, w, d, settled, v)
    return _path_sum(h, w, region, path), bool(certified)


def point_to_line(config, u, line_x: int, region: Region) -> PassageResult:
    """Passage time from ``u`` to the vertical line ``{x = line_x}`` inside ``region``."""
    u = Vertex(*u)
    _check_endpoints(region, u)
    if u.x == line_x:
        raise ValueError("start vertex lies on the target line")
    if not region.x_min <= line_x <= region.x_max:
        raise ValueError("region does not span the target line")
    h, w = config.region_times(region.x_min, region.x_max, region.y_min, region.y_max)
    col = line_x - region.x_min
    src_j = np.arange(region.height)
    d, settled, _ = _label_setting(h, w, np.full(region.height, col), src_j, 1,
                                   u.x - region.x_min, u.y - region.y_min)
    best = d[u.x - region.x_min, u.y - region.y_min]
    outside = abs(u.x - line_x) + min(region.y_max + 1 - u.y, u.y - region.y_min + 1)
    # a path touching the line has ended, so line vertices are never re-entry points
    w0 = _min_weight(config)
    certified = _exit_bound(region, d, settled, u, skip_col=col, w0=w0) > best and w0 * outside > best
    path = _walk_to_path(region, h, w, d, settled, u)
    margin = min(region.margin_of(p) for p in path[:-1]) if len(path) > 1 else region.margin_of(u)
    # the hit vertex sits on the line, which may be the box edge by construction
    margin = min(margin, region.y_max - path.end.y, path.end.y - region.y_min)
    return PassageResult(_path_sum(h, w, region, path), path, region, margin, bool(certified))


def _default_margin(u, v) -> int:
    return max(2, math.ceil((abs(u[0] - v[0]) + abs(u[1] - v[1])) / 8))


def _default_cap(u, v) -> int:
    return max(16, 8 * (abs(u[0] - v[0]) + abs(u[1] - v[1])))


def auto_region(config, u, v, initial_margin: int | None = None, cap: int | None = None):
    """Grow a box around ``u, v`` by doubling until the result is certified.

    Returns ``(region, PassageResult)``; raises RegionCertificationError once
    the margin would exceed ``cap`` (default ``8 |u - v|_1``).
    """
    u, v = Vertex(*u), Vertex(*v)
    margin = _default_margin(u, v) if initial_margin is None else int(initial_margin)
    cap = _default_cap(u, v) if cap is None else int(cap)
    if margin < 1:
        raise ValueError("initial_margin must be >= 1")
    while margin <= cap:
        region = Region.around([u, v], margin)
        res = passage_time(config, u, v, region)
        if res.certified and res.boundary_margin >= 1:
            return region, res
        margin *= 2
    raise RegionCertificationError(f"region certification failed for {tuple(u)} -> {tuple(v)} (cap {cap})")


def auto_time(config, u, v, initial_margin: int | None = None, cap: int | None = None):
    """Certified passage time without the path; returns ``(time, region)``."""
    u, v = Vertex(*u), Vertex(*v)
    margin = _default_margin(u, v) if initial_margin is None else int(initial_margin)
    cap = _default_cap(u, v) if cap is None else int(cap)
    while margin <= cap:
        region = Region.around([u, v], margin)
        t, ok = passage_time_only(config, u, v, region)
        if ok:
            return t, region
        margin *= 2
    raise RegionCertificationError(f"region certification failed for {tuple(u)} -> {tuple(v)} (cap {cap})")


def auto_line(config, u, line_x: int, initial_margin: int | None = None, cap: int | None = None):
    """Certified point-to-line result, growing the box on every side but the line's."""
    u = Vertex(*u)
    dist = abs(u.x - line_x)
    margin = max(2, math.ceil(dist / 8)) if initial_margin is None else int(initial_margin)
    cap = max(16, 8 * dist) if cap is None else int(cap)
    while margin <= cap:
        if line_x > u.x:
            region = Region(u.x - margin, line_x, u.y - margin, u.y + margin)
        else:
            region = Region(line_x, u.x + margin, u.y - margin, u.y + margin)
        res = point_to_line(config, u, line_x, region)
        if res.certified and res.boundary_margin >= 1:
            return region, res
        margin *= 2
    raise RegionCertificationError(f"region certification failed for {tuple(u)} -> x={line_x}")


# ---------------------------------------------------------------- oracles


def _neighbour_table(config, region: Region):
    h, w = config.region_times(region.x_min, region.x_max, region.y_min, region.y_max)
    nbrs = {}
    for x in range(region.x_min, region.x_max + 1):
        for y in range(region.y_min, region.y_max + 1):
            i, j = x - region.x_min, y - region.y_min
            out = []
            if x < region.x_max:
                out.append(((x + 1, y), float(h[i, j])))
            if x > region.x_min:
                out.append(((x - 1, y), float(h[i - 1, j])))
            if y < region.y_max:
                out.append(((x, y + 1), float(w[i, j])))
            if y > region.y_min:
                out.append(((x, y - 1), float(w[i, j - 1])))
            nbrs[(x, y)] = out
    return nbrs


def brute_force_passage(config, u, v, region: Region, max_vertices: int = 25, prune: bool = True) -> float:
    """Minimum of ``T(path)`` over every self-avoiding path in ``region`` (test oracle).

    With ``prune`` the search skips partial paths whose cost plus the l1 distance
    to go already reaches the best total; this relies on every edge costing >= 1.
    """
    u, v = tuple(u), tuple(v)
    _check_endpoints(region, u, v)
    if region.n_vertices > max_vertices:
        raise ValueError(f"region too large for exhaustive search ({region.n_vertices} > {max_vertices})")
    if u == v:
        return 0.0
    nbrs = _neighbour_table(config, region)
    best = math.inf
    visited = {u}
    ts = []

    def dfs(node, cost):
        nonlocal best
        for nxt, t in nbrs[node]:
            if nxt in visited:
                continue
            c = cost + t
            if nxt == v:
                best = min(best, math.fsum(ts + [t]))
                continue
            # slack keeps near-ties alive; the leaf total is the canonical fsum
            if prune and c + abs(nxt[0] - v[0]) + abs(nxt[1] - v[1]) > best * (1 + 1e-12):
                continue
            visited.add(nxt)
            ts.append(t)
            dfs(nxt, c)
            ts.pop()
            visited.remove(nxt)

    dfs(u, 0.0)
    return best


def brute_force_line(config, u, line_x: int, region: Region, max_vertices: int = 100) -> float:
    """Exhaustive point-to-line oracle; paths stop at their first line vertex."""
    u = tuple(u)
    _check_endpoints(region, u)
    if region.n_vertices > max_vertices:
        raise ValueError("region too large for exhaustive search")
    nbrs = _neighbour_table(config, region)
    best = math.inf
    visited = {u}
    ts = []

    def dfs(node, cost):
        nonlocal best
        for nxt, t in nbrs[node]:
            if nxt in visited:
                continue
            c = cost + t
            if nxt[0] == line_x:
                best = min(best, math.fsum(ts + [t]))
                continue
            if c + abs(nxt[0] - line_x) > best * (1 + 1e-12):
                continue
            visited.add(nxt)
            ts.append(t)
            dfs(nxt, c)
            ts.pop()
            visited.remove(nxt)

    dfs(u, 0.0)
    return best
