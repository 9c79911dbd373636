"""Broken bridges of lattice paths and the vertex marks built from them.

An M-bridge is an axis-parallel segment (vertices and edges) with fewer than
2M vertices. It is *broken* for a path when the path meets it only in its two
endpoints, so the path has to detour around it. Path edges are therefore never
bridges themselves.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field

from .geodesics import LatticePath, Vertex
from .weights import EdgeId, weight_at

_DIRS = ((1, 0), (-1, 0), (0, 1), (0, -1))


def classify_ne_se(path) -> str:
    """'northeast', 'southeast' or 'neither'.

    Direction of travel is irrelevant: a path using only -x/-y steps is the
    reversal of a northeast path and is reported as northeast (likewise for
    southeast). Paths with no turn at all (<= 2 vertices, straight lines)
    report northeast.
    """
    steps = set()
    vs = list(path)
    for a, b in zip(vs, vs[1:]):
        steps.add((b[0] - a[0], b[1] - a[1]))
    ne = [{(1, 0), (0, 1)}, {(-1, 0), (0, -1)}]
    se = [{(1, 0), (0, -1)}, {(-1, 0), (0, 1)}]
    if any(steps <= s for s in ne):
        return "northeast"
    if any(steps <= s for s in se):
        return "southeast"
    return "neither"


@dataclass(frozen=True)
class BridgeSegment:
    u: Vertex
    v: Vertex
    orientation: str
    vertex_count: int

    @classmethod
    def between(cls, u, v) -> "BridgeSegment":
        u, v = Vertex(*u), Vertex(*v)
        if u.y == v.y and u.x != v.x:
            orient = "horizontal"
        elif u.x == v.x and u.y != v.y:
            orient = "vertical"
        else:
            raise ValueError(f"{u}, {v} do not span an axis-parallel segment")
        return cls(u, v, orient, abs(u.x - v.x) + abs(u.y - v.y) + 1)

    def vertices(self):
        dx = (self.v.x > self.u.x) - (self.v.x < self.u.x)
        dy = (self.v.y > self.u.y) - (self.v.y < self.u.y)
        return [Vertex(self.u.x + k * dx, self.u.y + k * dy) for k in range(self.vertex_count)]

    def edges(self):
        vs = self.vertices()
        return [EdgeId.between(a, b) for a, b in zip(vs, vs[1:])]

    def is_m_bridge(self, M: int) -> bool:
        return self.vertex_count < 2 * M


@dataclass
class BrokenBridgeList:
    """Selected bridges with the path positions of their endpoints."""

    path: LatticePath
    M: int
    bridges: list = field(default_factory=list)
    spans: list = field(default_factory=list)  # (index of u_i, index of v_i) in the path

    def __len__(self):
        return len(self.bridges)

    def __iter__(self):
        return iter(self.bridges)

    def loop(self, i) -> list:
        a, b = self.spans[i]
        return list(self.path.vertices[a:b + 1])

    def endpoints(self) -> set:
        return {p for br in self.bridges for p in (br.u, br.v)}

    def to_records(self) -> list:
        return [{"u": list(br.u), "v": list(br.v), "orientation": br.orientation,
                 "loop": [list(p) for p in self.loop(i)]} for i, br in enumerate(self.bridges)]

    def to_json(self) -> str:
        return json.dumps(self.to_records())


def _bridges_at(vs, pos, j, start, M):
    """Broken bridges at path index ``j`` for the path suffix starting at ``start``.

    Returns ``(far_index, far_vertex)`` per direction that has one.
    """
    out = []
    x, y = vs[j]
    for dx, dy in _DIRS:
        for step in range(1, 2 * M - 1):
            q = (x + step * dx, y + step * dy)
            k = pos.get(q)
            if k is None or k < start:
                continue
            if step > 1 or abs(k - j) != 1:
                out.append((k, q))
            break
    return out


def find_broken_bridges(path, M: int) -> BrokenBridgeList:
    """Sequential selection of broken bridges along ``path``.

    Scan the remaining path for the first vertex carrying a broken bridge,
    take the bridge whose far end comes first along the path, then restart
    from that far end.
    """
    if M < 1:
        raise ValueError("M must be >= 1")
    if not isinstance(path, LatticePath):
        path = LatticePath(path)
    vs = [tuple(p) for p in path]
    pos = {p: i for i, p in enumerate(vs)}
    out = BrokenBridgeList(path, M)
    start = 0
    j = 0
    while j < len(vs):
        cands = _bridges_at(vs, pos, j, start, M)
        if not cands:
            j += 1
            continue
        k, q = min(cands)
        # the first vertex with a bridge precedes its partner, since the partner
        # would otherwise have been found first
        assert k > j
        out.bridges.append(BridgeSegment.between(vs[j], q))
        out.spans.append((j, k))
        start = j = k
    return out


def broken_bridges_anywhere(path, M: int) -> list:
    """Every M-broken bridge of ``path`` as a whole, as ``(i, k)`` index pairs with i < k."""
    vs = [tuple(p) for p in path]
    pos = {p: i for i, p in enumerate(vs)}
    found = set()
    for j in range(len(vs)):
        for k, _ in _bridges_at(vs, pos, j, 0, M):
            found.add((min(j, k), max(j, k)))
    return sorted(found)


def edge_weight_exceeds(config, bridge: BridgeSegment, z: float = 1.0) -> bool:
    return any(weight_at(config, e) > z for e in bridge.edges())


# ------------------------------------------------------------ invariants


def inside_loop(loop_vertices, point) -> bool:
    """Strict interior test for a closed rectilinear lattice polygon.

    Ray to +x with a half-open rule on unit vertical edges; points on the
    polygon are reported as not inside.
    """
    px, py = point
    n = len(loop_vertices)
    crossings = 0
    for i in range(n):
        (ax, ay), (bx, by) = loop_vertices[i], loop_vertices[(i + 1) % n]
        if (ax, ay) == (px, py):
            return False
        if ax == bx and ax > px and min(ay, by) == py:
            crossings += 1
    return crossings % 2 == 1


def loop_polygon(bbl: BrokenBridgeList, i: int) -> list:
    """Closed polygon: the loop subpath u_i -> v_i then the segment back from v_i."""
    seg = bbl.bridges[i].vertices()  # u_i ... v_i
    return bbl.loop(i) + seg[-2:0:-1]


def check_invariants(bbl: BrokenBridgeList, config=None) -> dict:
    """Run the structural checks on a selection; values are True when they hold.

    ``bridges_heavy`` (a bridge edge heavier than 1) is only meaningful for geodesics
    and is reported when ``config`` is given.
    """
    vs = [tuple(p) for p in bbl.path]
    pos = {p: i for i, p in enumerate(vs)}
    M = bbl.M
    res = {}

    ok = True
    for br, (j, k) in zip(bbl.bridges, bbl.spans):
        seg = [tuple(p) for p in br.vertices()]
        hits = {p for p in seg if p in pos and pos[p] >= j}
        ok &= hits == {tuple(br.u), tuple(br.v)} and br.is_m_bridge(M)
    res["meets_rest_at_ends"] = bool(ok)

    ok = True
    for br in bbl.bridges:
        seg = [tuple(p) for p in br.vertices()]
        ok &= {p for p in seg if p in pos} == {tuple(br.u), tuple(br.v)}
    res["meets_path_at_ends"] = bool(ok)

    # stretches between consecutive loops, plus the head and tail
    cuts = [0] + [c for sp in bbl.spans for c in sp] + [len(vs) - 1]
    ok = True
    for a, b in zip(cuts[0::2], cuts[1::2]):
        if b > a and broken_bridges_anywhere(vs[a:b + 1], M):
            ok = False
    res["no_bridge_between_loops"] = ok

    edges = [set(EdgeId.between(p, q) for p, q in zip(vs[a:b], vs[a + 1:b + 1])) for a, b in bbl.spans]
    res["loops_edge_disjoint"] = all(not (edges[i] & edges[k]) for i in range(len(edges)) for k in range(i + 1, len(edges)))

    segs = [set(br.edges()) for br in bbl.bridges]
    res["bridges_edge_disjoint"] = all(not (segs[i] & segs[k]) for i in range(len(segs)) for k in range(i + 1, len(segs)))

    ok = True
    for i in range(len(bbl.bridges)):
        poly = loop_polygon(bbl, i)
        xs = [p[0] for p in poly]
        ys = [p[1] for p in poly]
        for p in vs:
            if min(xs) < p[0] < max(xs) and min(ys) < p[1] < max(ys) and inside_loop(poly, p):
                ok = False
                break
    res["loop_interior"] = ok

    if config is not None:
        res["bridges_heavy"] = all(edge_weight_exceeds(config, br, 1.0) for br in bbl.bridges)
    return res


# ------------------------------------------------------------ marks


@dataclass(frozen=True)
class PathMarks:
    D: frozenset
    S_M: frozenset
    D_z: frozenset
    S_M_z: frozenset

    def to_record(self) -> dict:
        return {k: sorted([list(p) for p in getattr(self, k)]) for k in ("D", "S_M", "D_z", "S_M_z")}


def mark_vertices(path, config, M: int, z: float, bridges: BrokenBridgeList | None = None) -> PathMarks:
    if z <= 1:
        raise ValueError("z must exceed 1")
    if not isinstance(path, LatticePath):
        path = LatticePath(path)
    bbl = bridges if bridges is not None else find_broken_bridges(path, M)
    ts = path.edge_times(config)
    D, Dz = set(), set()
    for a, b, t in zip(path.vertices, path.vertices[1:], ts):
        if t > 1:
            D.update((a, b))
        if t > z:
            Dz.update((a, b))
    S = bbl.endpoints()
    Sz = {p for br in bbl.bridges if edge_weight_exceeds(config, br, z) for p in (br.u, br.v)}
    return PathMarks(frozenset(D), frozenset(S), frozenset(Dz), frozenset(Sz))


def census(marks: PathMarks, m: int):
    """``(|B(m) & (S_M | D)|, |B(m) & (S_M_z | D_z)|)`` with ``B(m) = [-m, m]^2``."""
    if m < 1:
        raise ValueError("m must be >= 1")
    inside = lambda s: sum(1 for p in s if abs(p[0]) <= m and abs(p[1]) <= m)
    return inside(marks.S_M | marks.D), inside(marks.S_M_z | marks.D_z)
