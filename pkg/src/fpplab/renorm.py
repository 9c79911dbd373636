"""Coarse-graining of a geodesic prefix into M-squares and vertical M-strips.

Squares are half-open: ``B_M(w) = [M w1, M w1 + M) x [M w2, M w2 + M)``, and
the strip ``V_M(w1)`` is the column of squares with first index ``w1``.
"""
from __future__ import annotations

import csv
import io
import json
from dataclasses import asdict, dataclass, field
from typing import NamedTuple

from .bridges import BrokenBridgeList, PathMarks, find_broken_bridges, mark_vertices
from .geodesics import LatticePath


class SquareIndex(NamedTuple):
    w1: int
    w2: int
    M: int

    @classmethod
    def of(cls, p, M: int) -> "SquareIndex":
        return cls(p[0] // M, p[1] // M, M)

    def contains(self, p) -> bool:
        return self.M * self.w1 <= p[0] < self.M * (self.w1 + 1) and self.M * self.w2 <= p[1] < self.M * (self.w2 + 1)

    def big_square(self):
        """Corner bounds of the 7M-square centred on this square, half-open."""
        M = self.M
        return M * (self.w1 - 3), M * (self.w1 + 4), M * (self.w2 - 3), M * (self.w2 + 4)


@dataclass
class StripClass:
    w1: int
    cls: str  # bad | good-long | good-short-flat | good-short-nonflat
    v1: tuple | None = None
    v2: tuple | None = None
    n_vertices: int = 0
    slope: float | None = None
    one_path: bool | None = None


@dataclass
class RenormReport:
    M: int
    m: int
    n: int
    z: float
    delta1: float
    tan_theta1: float
    strips: list
    flat_count: int
    fattened_count: int
    prefix_vertices: int
    census: dict  # (q1, q2) -> R
    marked_z: int
    exits_first: str
    checks: dict = field(default_factory=dict)

    @property
    def horizontal_needed(self) -> bool:
        return self.exits_first in ("top", "bottom")

    def to_record(self) -> dict:
        rec = asdict(self)
        rec["census"] = [[q[0], q[1], r] for q, r in sorted(self.census.items())]
        rec["horizontal_needed"] = self.horizontal_needed
        return rec

    def to_json(self) -> str:
        return json.dumps(self.to_record())

    def strips_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["w1", "class", "v1_x", "v1_y", "v2_x", "v2_y", "n_vertices", "slope"])
        for s in self.strips:
            v1 = s.v1 or ("", "")
            v2 = s.v2 or ("", "")
            w.writerow([s.w1, s.cls, *v1, *v2, s.n_vertices, "" if s.slope is None else repr(s.slope)])
        return buf.getvalue()

    def census_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["q1", "q2", "R"])
        for q, r in sorted(self.census.items()):
            w.writerow([q[0], q[1], r])
        return buf.getvalue()


# ------------------------------------------------------------ path pieces


def split_at_line(path, m: int):
    """Cut at the first vertex with ``x == m``; that vertex ends the prefix and starts the suffix."""
    vs = list(path)
    for i, p in enumerate(vs):
        if p[0] == m:
            return LatticePath(vs[:i + 1]), LatticePath(vs[i:])
    raise ValueError(f"path never reaches the line x={m}")


def fatten(prefix, M: int) -> set:
    if M < 1:
        raise ValueError("M must be >= 1")
    return {SquareIndex.of(p, M) for p in prefix}


def is_8_connected(squares) -> bool:
    sq = {(s.w1, s.w2) for s in squares}
    if not sq:
        return True
    start = next(iter(sq))
    seen, stack = {start}, [start]
    while stack:
        a, b = stack.pop()
        for da in (-1, 0, 1):
            for db in (-1, 0, 1):
                q = (a + da, b + db)
                if q in sq and q not in seen:
                    seen.add(q)
                    stack.append(q)
    return len(seen) == len(sq)


def gamma_m(path, bridges: BrokenBridgeList, m: int) -> LatticePath:
    """Follow ``path`` but go straight along each selected bridge instead of its loop; stop at ``x == m``."""
    vs = list(path)
    spans = dict(bridges.spans)
    by_start = {j: br for br, (j, _) in zip(bridges.bridges, bridges.spans)}
    out = []
    i = 0
    while i < len(vs):
        if i in spans:
            seg = by_start[i].vertices()
            for p in seg[:-1]:
                out.append(tuple(p))
                if p[0] == m:
                    return LatticePath(out)
            i = spans[i]
            continue
        out.append(tuple(vs[i]))
        if vs[i][0] == m:
            return LatticePath(out)
        i += 1
    raise ValueError(f"path never reaches the line x={m}")


def first_crossing(walk, M: int, w1: int):
    """First left-to-right crossing of strip ``w1``: index pair ``(a, b)`` or None.

    ``a`` is on the strip's left column ``x = M w1``, ``b`` on its right column
    ``x = M w1 + M - 1``, and every vertex between stays inside the strip.
    """
    if M < 2:
        raise ValueError("strip crossings need M >= 2")
    lo, hi = M * w1, M * w1 + M - 1
    a = None
    for i, p in enumerate(walk):
        x = p[0]
        if x == lo:
            a = i
        elif x < lo or x > hi:
            a = None
        elif x == hi:
            if a is not None:
                return a, i
    return None


def exits_first(path, m: int) -> str:
    """Which side of ``B(m)`` the path touches first (``'none'`` if it stays inside)."""
    for p in path:
        x, y = p
        if x == m:
            return "right"
        if x == -m:
            return "left"
        if y == m:
            return "top"
        if y == -m:
            return "bottom"
    return "none"


def _in_box(p, m):
    return abs(p[0]) <= m and abs(p[1]) <= m


def classify_strips(walk, marks: PathMarks, M: int, m: int, tan_theta1: float, delta1: float,
                    config=None) -> list:
    """Strip taxonomy for strips ``0 <= w1 < m // M``.

    ``walk`` is the surgery path. Marks outside ``[0, m//M)`` still spread
    badness into the range. With ``config``, good crossings record whether all
    their edges have weight exactly 1.
    """
    if delta1 <= 0:
        raise ValueError("delta1 must be positive")
    if M < 2:
        raise ValueError("strip classification needs M >= 2")
    n_strips = m // M
    marked = {p[0] // M for p in (marks.S_M | marks.D) if _in_box(p, m)}
    bad = {w + d for w in marked for d in (-2, -1, 0, 1, 2)}
    vs = list(walk)
    out = []
    for w1 in range(n_strips):
        if w1 in bad:
            out.append(StripClass(w1, "bad"))
            continue
        ab = first_crossing(vs, M, w1)
        if ab is None:  # cannot happen for a walk from x=0 to x=m
            raise RuntimeError(f"no crossing of strip {w1}")
        a, b = ab
        seg = vs[a:b + 1]
        slope = (seg[-1][1] - seg[0][1]) / (seg[-1][0] - seg[0][0])
        one = None
        if config is not None:
            one = bool((LatticePath(seg).edge_times(config) == 1.0).all())
        if len(seg) >= 2 * M:
            cls = "good-long"
        elif abs(slope) <= tan_theta1 - delta1:
            cls = "good-short-flat"
        else:
            cls = "good-short-nonflat"
        out.append(StripClass(w1, cls, tuple(seg[0]), tuple(seg[-1]), len(seg), slope, one))
    return out


# ------------------------------------------------------------ 49 families


SHIFTS = [(a, b) for a in range(-3, 4) for b in range(-3, 4)]


def family_of(sq: SquareIndex):
    """Shift class ``q`` in ``{-3..3}^2`` with ``sq = q + 7 (i, j)``."""
    return ((sq.w1 + 3) % 7 - 3, (sq.w2 + 3) % 7 - 3)


def census_49(marks: PathMarks, M: int, m: int) -> dict:
    """``R_M(q, m, .)``: per shift class, the number of family squares holding a z-marked vertex of ``B(m)``."""
    if m < 1:
        raise ValueError("m must be >= 1")
    squares = {SquareIndex.of(p, M) for p in (marks.S_M_z | marks.D_z) if _in_box(p, m)}
    R = {q: 0 for q in SHIFTS}
    for sq in squares:
        R[family_of(sq)] += 1
    return R


def marked_count_z(marks: PathMarks, m: int) -> int:
    return sum(1 for p in (marks.S_M_z | marks.D_z) if _in_box(p, m))


def check_tiling(M: int, window) -> bool:
    """Geometric check of the 49-family decomposition on ``window = (x0, x1, y0, y1)``.

    Each vertex lies in exactly one M-square over all families and, for every
    family, in exactly one of that family's 7M-squares.
    """
    x0, x1, y0, y1 = window
    lo1, hi1 = x0 // M - 10, x1 // M + 10
    lo2, hi2 = y0 // M - 10, y1 // M + 10
    fams = {}
    for w1 in range(lo1, hi1 + 1):
        for w2 in range(lo2, hi2 + 1):
            sq = SquareIndex(w1, w2, M)
            for q in SHIFTS:
                if (w1 - q[0]) % 7 == 0 and (w2 - q[1]) % 7 == 0:
                    fams.setdefault(q, []).append(sq)
    if set(fams) != set(SHIFTS):
        return False
    for x in range(x0, x1 + 1):
        for y in range(y0, y1 + 1):
            if sum(sq.contains((x, y)) for q in SHIFTS for sq in fams[q]) != 1:
                return False
            for q in SHIFTS:
                hits = 0
                for sq in fams[q]:
                    a, b, c, d = sq.big_square()
                    hits += a <= x < b and c <= y < d
                if hits != 1:
                    return False
    return True


def bridges_contained(bridges: BrokenBridgeList) -> bool:
    """Every selected bridge lies in the 7M-square around each endpoint's square."""
    M = bridges.M
    for br in bridges.bridges:
        for end in (br.u, br.v):
            a, b, c, d = SquareIndex.of(end, M).big_square()
            if not all(a <= p[0] < b and c <= p[1] < d for p in br.vertices()):
                return False
    return True


# ------------------------------------------------------------ report


def renorm_report(path, config, M: int, m: int, n: int, z: float, tan_theta1: float, delta1: float,
                  bridges: BrokenBridgeList | None = None) -> RenormReport:
    path = path if isinstance(path, LatticePath) else LatticePath(path)
    bbl = bridges if bridges is not None else find_broken_bridges(path, M)
    marks = mark_vertices(path, config, M, z, bbl)
    prefix, _ = split_at_line(path, m)
    walk = gamma_m(path, bbl, m)
    strips = classify_strips(walk, marks, M, m, tan_theta1, delta1, config)
    squares = fatten(prefix, M)
    R = census_49(marks, M, m)
    count_z = marked_count_z(marks, m)
    checks = {
        "renorm_bound": sum(R.values()) * M * M >= count_z,
        "squares_cover_prefix": len(squares) * M * M >= len(prefix) >= m,
        "connected": is_8_connected(squares),
        "bridges_contained": bridges_contained(bbl),
        "good_one_path": all(s.one_path for s in strips if s.cls != "bad"),
        "gamma_not_longer": len(walk) <= len(prefix),
    }
    return RenormReport(M, m, n, z, delta1, tan_theta1, strips,
                        sum(s.cls == "good-short-flat" for s in strips),
                        len(squares), len(prefix), R, count_z, exits_first(path, m), checks)
