import json

import pytest
from hypothesis import given, strategies as st

from fpplab.bridges import PathMarks, find_broken_bridges, mark_vertices
from fpplab.geodesics import LatticePath, auto_region
from fpplab.renorm import (
    SHIFTS, SquareIndex, bridges_contained, census_49, check_tiling, classify_strips, exits_first,
    family_of, fatten, first_crossing, gamma_m, is_8_connected, renorm_report, split_at_line,
)
from fpplab.weights import Configuration, DistributionSpec

EMPTY = PathMarks(frozenset(), frozenset(), frozenset(), frozenset())


def straight(n):
    return LatticePath([(k, 0) for k in range(n + 1)])


def test_split_straight_and_first_touch():
    pre, suf = split_at_line(straight(10), 5)
    assert pre.n_edges == 5 and suf.start == (5, 0)
    wiggle = LatticePath([(0, 0), (1, 0), (2, 0), (2, 1), (1, 1), (1, 2), (2, 2), (3, 2)])
    pre, _ = split_at_line(wiggle, 2)
    assert pre.end == (2, 0)
    with pytest.raises(ValueError):
        split_at_line(straight(3), 7)


@given(seed=st.integers(0, 2**32), m=st.integers(1, 30))
def test_split_preserves_time(seed, m):
    c = Configuration(seed, DistributionSpec.one_plus_exp(1.0, p=0.5))
    _, r = auto_region(c, (0, 0), (30, 0))
    pre, suf = split_at_line(r.path, m)
    assert pre.vertices + suf.vertices[1:] == r.path.vertices
    assert pre.passage_time(c) + suf.passage_time(c) == pytest.approx(r.time, rel=1e-12)


def test_fatten_examples():
    assert fatten([(0, 0)], 4) == {SquareIndex(0, 0, 4)}
    for M in (1, 2, 3, 5):
        assert len(fatten(straight(12), M)) == -(-13 // M)
    assert SquareIndex.of((-1, -1), 3) == SquareIndex(-1, -1, 3)


@given(seed=st.integers(0, 2**32), M=st.integers(1, 6))
def test_fatten_bound_and_connected(seed, M):
    c = Configuration(seed, DistributionSpec.two_point(0.7, 2))
    _, r = auto_region(c, (0, 0), (25, 0))
    pre, _ = split_at_line(r.path, 12)
    sq = fatten(pre, M)
    assert len(sq) * M * M >= len(pre) >= 12
    assert is_8_connected(sq)
    assert all(any(s.contains(p) for s in sq) for p in pre)


def test_strips_constant_one_all_flat():
    c = Configuration(0, DistributionSpec.constant_one())
    p = straight(40)
    marks = mark_vertices(p, c, 3, 2.0)
    strips = classify_strips(p, marks, 3, 20, 0.8, 0.01, c)
    assert [s.cls for s in strips] == ["good-short-flat"] * (20 // 3)
    assert [s.v1 for s in strips[:2]] == [(0, 0), (3, 0)]
    assert all(s.slope == 0 and s.one_path for s in strips)


def test_bad_contagion():
    p = straight(60)
    marks = PathMarks(frozenset({(25, 0)}), frozenset(), frozenset(), frozenset())
    strips = classify_strips(p, marks, 5, 60, 0.8, 0.01)
    bad = [s.w1 for s in strips if s.cls == "bad"]
    assert bad == [3, 4, 5, 6, 7]
    # a mark just left of the origin still spoils strips 0 and 1
    marks = PathMarks(frozenset({(-1, 0)}), frozenset(), frozenset(), frozenset())
    assert [s.cls for s in classify_strips(p, marks, 5, 60, 0.8, 0.01)[:3]] == ["bad", "bad", "good-short-flat"]
    # marks outside B(m) do not count
    marks = PathMarks(frozenset({(25, 70)}), frozenset(), frozenset(), frozenset())
    assert all(s.cls != "bad" for s in classify_strips(p, marks, 5, 60, 0.8, 0.01))


def test_slope_one_nonflat():
    # per strip of width 4: right, up 3, right 2, then right into the next strip
    walk = [(0, 0)]
    for _ in range(2):
        for dx, dy in [(1, 0), (0, 1), (0, 1), (0, 1), (1, 0), (1, 0), (1, 0)]:
            x, y = walk[-1]
            walk.append((x + dx, y + dy))
    strips = classify_strips(walk, EMPTY, 4, 8, 0.8, 0.01)
    assert [(s.v1, s.v2) for s in strips] == [((0, 0), (3, 3)), ((4, 3), (7, 6))]
    assert all(s.cls == "good-short-nonflat" and s.slope == 1.0 and s.n_vertices == 7 for s in strips)
    assert classify_strips(walk, EMPTY, 4, 8, 1.5, 0.01)[0].cls == "good-short-flat"


def test_long_crossing_and_first_selection():
    # first pass through strip 0 wanders up and down, so it is long
    walk = [(0, 0), (0, 1), (1, 1), (1, 2), (1, 3), (1, 4), (1, 5), (1, 4), (2, 4), (2, 3),
            (2, 2), (2, 1), (2, 0), (3, 0), (4, 0), (5, 0)]
    assert first_crossing(walk, 4, 0) == (1, 13)
    strips = classify_strips(walk, EMPTY, 4, 4, 0.8, 0.01)
    assert strips[0].cls == "good-long" and strips[0].slope == -1 / 3
    with pytest.raises(ValueError):
        classify_strips(walk, EMPTY, 1, 4, 0.8, 0.01)


def test_gamma_m_examples():
    p = [(0, 0), (0, 1), (1, 1), (1, 0), (2, 0), (3, 0)]
    b = find_broken_bridges(p, 2)
    assert list(gamma_m(p, b, 3)) == [(0, 0), (1, 0), (2, 0), (3, 0)]
    assert list(gamma_m(straight(8), find_broken_bridges(straight(8), 3), 5)) == list(straight(5))
    # truncation can land on a bridge segment
    assert list(gamma_m(p, b, 1)) == [(0, 0), (1, 0)]


def test_exits_first():
    assert exits_first(straight(10), 4) == "right"
    assert exits_first([(0, 0), (0, 1), (0, 2), (1, 2)], 2) == "top"
    assert exits_first([(0, 0)], 2) == "none"


def test_census_49_examples():
    R = census_49(EMPTY, 3, 10)
    assert len(R) == 49 and sum(R.values()) == 0
    one = PathMarks(frozenset(), frozenset(), frozenset({(5, -2)}), frozenset())
    R = census_49(one, 3, 10)
    assert sum(R.values()) == 1 and R[family_of(SquareIndex.of((5, -2), 3))] == 1
    assert sorted(SHIFTS) == sorted({family_of(SquareIndex(a, b, 2)) for a in range(7) for b in range(7)})


@given(pts=st.lists(st.tuples(st.integers(-15, 15), st.integers(-15, 15)), max_size=60),
       M=st.integers(1, 5), m=st.integers(1, 15))
def test_renorm_bound_on_random_marks(pts, M, m):
    marks = PathMarks(frozenset(), frozenset(), frozenset(pts[::2]), frozenset(pts[1::2]))
    R = census_49(marks, M, m)
    inside = {p for p in pts if abs(p[0]) <= m and abs(p[1]) <= m}
    # every square sits in one family, so the family counts add up to distinct squares
    assert sum(R.values()) == len({(p[0] // M, p[1] // M) for p in inside})
    assert sum(R.values()) * M * M >= len(inside)


@pytest.mark.parametrize("M", [1, 2, 3])
def test_tiling(M):
    assert check_tiling(M, (-2 * M, 5 * M, -M, 4 * M))


@pytest.mark.parametrize("seed", range(8))
def test_report_on_geodesics(seed):
    c = Configuration(seed, DistributionSpec.two_point(0.8, 3))
    _, r = auto_region(c, (0, 0), (120, 0))
    for M in (2, 3, 5):
        rep = renorm_report(r.path, c, M, 50, 120, 2.0, 0.8, 0.01)
        assert all(rep.checks.values()), rep.checks
        assert rep.flat_count == sum(s.cls == "good-short-flat" for s in rep.strips)
        assert len(rep.strips) == 50 // M
        rec = json.loads(rep.to_json())
        assert len(rec["census"]) == 49
        assert rep.strips_csv().startswith("w1,class")
        assert len(rep.census_csv().splitlines()) == 50
        assert bridges_contained(find_broken_bridges(r.path, M))
