"""Edge-time distributions and seeded configurations on the infinite square lattice.

Every edge time is a pure function of ``(master_seed, replicate_index, edge)``:
a 64-bit counter built from the canonical edge id is pushed through a keyed
SplitMix64 finalizer and the resulting uniform is mapped through the inverse
CDF of the distribution. Nothing is streamed, so the lattice is addressable
in any order and any region restriction sees the same values.
"""
from __future__ import annotations

import hashlib
import math
import re
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

HORIZONTAL = 0
VERTICAL = 1

FAMILIES = ("constant_one", "two_point", "one_plus_exp", "one_plus_uniform")

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_REP_SALT = np.uint64(0x632BE59BD9B4E019)
_COORD_OFFSET = 1 << 30
_TWO53 = 1.0 / 9007199254740992.0


def _mix64(z):
    # SplitMix64 output function; z is a uint64 ndarray (wraps mod 2**64).
    z = z + _GOLDEN
    z = (z ^ (z >> np.uint64(30))) * _M1
    z = (z ^ (z >> np.uint64(27))) * _M2
    return z ^ (z >> np.uint64(31))


def stream_key(master_seed, replicate_index) -> np.ndarray:
    """64-bit key per replicate; returns a 1-d array shaped like ``replicate_index``."""
    seed = np.array([int(master_seed)], dtype=np.uint64)
    rep = np.atleast_1d(np.asarray(replicate_index, dtype=np.int64)).astype(np.uint64)
    return _mix64(seed ^ _mix64(rep + _REP_SALT))


def edge_uniforms(master_seed, replicate_index, x, y, orientation) -> np.ndarray:
    """Uniforms in [0, 1) attached to edges; all array arguments broadcast together."""
    scalar_rep = np.ndim(replicate_index) == 0
    arrays = [np.asarray(x, dtype=np.int64), np.asarray(y, dtype=np.int64),
              np.asarray(orientation, dtype=np.int64)]
    if not scalar_rep:
        arrays.append(np.asarray(replicate_index, dtype=np.int64))
    arrays = np.broadcast_arrays(*arrays)
    shape = arrays[0].shape
    x, y, o = (a.reshape(-1) for a in arrays[:3])
    if x.size and (np.abs(x).max() >= _COORD_OFFSET or np.abs(y).max() >= _COORD_OFFSET):
        raise ValueError("edge coordinates must lie within +-2**30")
    key = stream_key(master_seed, replicate_index if scalar_rep else arrays[3].reshape(-1))
    counter = (
        ((x + _COORD_OFFSET).astype(np.uint64) << np.uint64(32))
        | ((y + _COORD_OFFSET).astype(np.uint64) << np.uint64(1))
        | o.astype(np.uint64)
    )
    h = _mix64(_mix64(counter ^ key) + key)
    return ((h >> np.uint64(11)).astype(np.float64) * _TWO53).reshape(shape)


def derive_seed(master_seed: int, *labels) -> int:
    """Independent 64-bit sub-seed for a named stream (e.g. one value of n)."""
    text = repr((int(master_seed),) + tuple(labels)).encode()
    return int.from_bytes(hashlib.blake2b(text, digest_size=8).digest(), "little")


@dataclass(frozen=True)
class DistributionSpec:
    """Edge-time law with ``inf supp = 1``.

    ``p`` is the atom ``F(1)``. ``b`` is the upper value of the two-point law,
    ``rate`` the exponential rate and ``width`` the uniform width of the
    continuous part sitting above 1.
    """

    family: str
    p: float = 1.0
    b: float | None = None
    rate: float | None = None
    width: float | None = None

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ValueError(f"unknown distribution family {self.family!r}")
        if not 0.0 <= self.p <= 1.0:
            raise ValueError(f"atom probability p={self.p} outside [0, 1]")
        if self.family == "constant_one":
            if self.p != 1.0:
                raise ValueError("constant_one has p = 1")
        elif self.family == "two_point":
            if self.b is None or not self.b > 1.0:
                raise ValueError("two_point needs b > 1")
        elif self.family == "one_plus_exp":
            if self.rate is None or not self.rate > 0.0:
                raise ValueError("one_plus_exp needs rate > 0")
        elif self.family == "one_plus_uniform":
            if self.width is None or not self.width > 0.0:
                raise ValueError("one_plus_uniform needs width > 0")

    @classmethod
    def constant_one(cls) -> "DistributionSpec":
        return cls("constant_one")

    @classmethod
    def two_point(cls, p: float, b: float) -> "DistributionSpec":
        return cls("two_point", p=float(p), b=float(b))

    @classmethod
    def one_plus_exp(cls, rate: float = 1.0, p: float = 0.0) -> "DistributionSpec":
        return cls("one_plus_exp", p=float(p), rate=float(rate))

    @classmethod
    def one_plus_uniform(cls, width: float = 1.0, p: float = 0.0) -> "DistributionSpec":
        return cls("one_plus_uniform", p=float(p), width=float(width))

    @property
    def is_constant(self) -> bool:
        return self.family == "constant_one" or self.p == 1.0

    @property
    def is_discrete(self) -> bool:
        return self.family in ("constant_one", "two_point")

    def from_uniform(self, u):
        """Inverse CDF: uniforms in [0, 1) to edge times (``u < p`` maps to 1)."""
        u = np.asarray(u, dtype=np.float64)
        if self.family == "constant_one":
            return np.ones_like(u)
        if self.family == "two_point":
            return np.where(u < self.p, 1.0, self.b)
        v = np.clip((u - self.p) / (1.0 - self.p) if self.p < 1.0 else np.zeros_like(u), 0.0, None)
        if self.family == "one_plus_exp":
            tail = 1.0 - np.log1p(-v) / self.rate
        else:
            tail = 1.0 + self.width * v
        return np.where(u < self.p, 1.0, tail)

    def cdf(self, x):
        x = np.asarray(x, dtype=np.float64)
        if self.family == "constant_one":
            return (x >= 1.0).astype(float)
        if self.family == "two_point":
            return np.where(x < 1.0, 0.0, np.where(x < self.b, self.p, 1.0))
        if self.family == "one_plus_exp":
            cont = 1.0 - np.exp(-self.rate * np.clip(x - 1.0, 0.0, None))
        else:
            cont = np.clip((x - 1.0) / self.width, 0.0, 1.0)
        return np.where(x < 1.0, 0.0, self.p + (1.0 - self.p) * cont)

    def mean(self) -> float:
        if self.family == "constant_one":
            return 1.0
        if self.family == "two_point":
            return self.p + (1.0 - self.p) * self.b
        if self.family == "one_plus_exp":
            return 1.0 + (1.0 - self.p) / self.rate
        return 1.0 + (1.0 - self.p) * self.width / 2.0

    def to_text(self) -> str:
        if self.family == "constant_one":
            return "constant_one"
        if self.family == "two_point":
            return f"two_point(p={self.p!r}, b={self.b!r})"
        if self.family == "one_plus_exp":
            s = f"one_plus_exp(rate={self.rate!r}"
        else:
            s = f"one_plus_uniform(width={self.width!r}"
        return s + (f", p={self.p!r})" if self.p else ")")

    def __str__(self) -> str:
        return self.to_text()


_DIST_RE = re.compile(r"^\s*([a-z_]+)\s*(?:\((.*)\))?\s*$")


def parse_distribution(text: str) -> DistributionSpec:
    """Parse ``two_point(p=0.8, b=3.0)``-style text into a DistributionSpec."""
    m = _DIST_RE.match(text)
    if not m:
        raise ValueError(f"cannot parse distribution {text!r}")
    family, body = m.group(1), m.group(2)
    kwargs = {}
    if body and body.strip():
        for part in body.split(","):
            key, sep, value = part.partition("=")
            if not sep:
                raise ValueError(f"expected key=value in {text!r}")
            kwargs[key.strip()] = float(value)
    allowed = {
        "constant_one": set(),
        "two_point": {"p", "b"},
        "one_plus_exp": {"rate", "p"},
        "one_plus_uniform": {"width", "p"},
    }
    if family not in allowed:
        raise ValueError(f"unknown distribution family {family!r}")
    extra = set(kwargs) - allowed[family]
    if extra:
        raise ValueError(f"unexpected parameters {sorted(extra)} for {family}")
    if family == "constant_one":
        return DistributionSpec.constant_one()
    if family == "two_point":
        if set(kwargs) != {"p", "b"}:
            raise ValueError("two_point needs both p and b")
        return DistributionSpec.two_point(**kwargs)
    if family == "one_plus_exp":
        return DistributionSpec.one_plus_exp(**kwargs)
    return DistributionSpec.one_plus_uniform(**kwargs)


class EdgeId(NamedTuple):
    """Edge from ``(x, y)`` to ``(x+1, y)`` (horizontal) or ``(x, y+1)`` (vertical)."""

    x: int
    y: int
    orientation: int

    @classmethod
    def between(cls, a, b) -> "EdgeId":
        (ax, ay), (bx, by) = a, b
        if ay == by and abs(ax - bx) == 1:
            return cls(min(ax, bx), ay, HORIZONTAL)
        if ax == bx and abs(ay - by) == 1:
            return cls(ax, min(ay, by), VERTICAL)
        raise ValueError(f"{a} and {b} are not lattice neighbours")

    def endpoints(self):
        if self.orientation == HORIZONTAL:
            return (self.x, self.y), (self.x + 1, self.y)
        return (self.x, self.y), (self.x, self.y + 1)


@dataclass(frozen=True)
class Configuration:
    """One sample of the edge-time field, addressed lazily."""

    master_seed: int
    distribution: DistributionSpec
    replicate_index: int = 0

    def __post_init__(self):
        if not 0 <= int(self.master_seed) < 2**64:
            raise ValueError("master_seed must be a 64-bit unsigned integer")
        if int(self.replicate_index) < 0:
            raise ValueError("replicate_index must be nonnegative")

    @property
    def min_weight(self) -> float:
        return 1.0  # every family has inf supp = 1

    def uniforms(self, x, y, orientation):
        return edge_uniforms(self.master_seed, self.replicate_index, x, y, orientation)

    def times(self, x, y, orientation) -> np.ndarray:
        return self.distribution.from_uniform(self.uniforms(x, y, orientation))

    def region_times(self, x_min: int, x_max: int, y_min: int, y_max: int):
        """Horizontal and vertical edge times for the box, indexed from its corner.

        ``h[i, j]`` is the edge from ``(x_min+i, y_min+j)`` to the right,
        ``v[i, j]`` the edge from the same vertex upward.
        """
        xs = np.arange(x_min, x_max + 1)
        ys = np.arange(y_min, y_max + 1)
        h = self.times(xs[:-1, None], ys[None, :], HORIZONTAL)
        v = self.times(xs[:, None], ys[None, :-1], VERTICAL)
        return np.ascontiguousarray(h), np.ascontiguousarray(v)

    def scaled(self, factor: float) -> "ScaledConfiguration":
        return ScaledConfiguration(self, float(factor))


@dataclass(frozen=True)
class ScaledConfiguration:
    """A configuration with every edge time multiplied by a constant."""

    base: Configuration
    factor: float

    @property
    def distribution(self):
        return self.base.distribution

    @property
    def min_weight(self) -> float:
        return self.factor * self.base.min_weight

    def times(self, x, y, orientation):
        return self.factor * self.base.times(x, y, orientation)

    def region_times(self, x_min, x_max, y_min, y_max):
        h, v = self.base.region_times(x_min, x_max, y_min, y_max)
        return h * self.factor, v * self.factor


def weight_at(config, e) -> float:
    """Passage time of a single edge."""
    e = EdgeId(*e)
    return float(config.times(np.array(e.x), np.array(e.y), e.orientation))


def path_edge_times(config, vertices) -> np.ndarray:
    """Times of the consecutive edges of a vertex sequence, in path order."""
    pts = np.asarray(vertices, dtype=np.int64).reshape(-1, 2)
    if len(pts) < 2:
        return np.zeros(0)
    a, b = pts[:-1], pts[1:]
    step = np.abs(b - a).sum(axis=1)
    if np.any(step != 1):
        raise ValueError("consecutive vertices must be lattice neighbours")
    lo = np.minimum(a, b)
    orient = (a[:, 0] == b[:, 0]).astype(np.int64)
    return np.asarray(config.times(lo[:, 0], lo[:, 1], orient), dtype=np.float64)


def delta3_of(delta: float, M: int, N: float) -> float:
    """Solve ``d3**(delta/16) * (48 M)**N = 1/2`` for d3."""
    if not (delta > 0 and M >= 1 and N >= 0):
        raise ValueError("need delta > 0, M >= 1, N >= 0")
    log_d3 = (16.0 / delta) * (-math.log(2.0) - N * math.log(48.0 * M))
    if log_d3 < math.log(np.finfo(float).tiny):
        raise ArithmeticError("threshold numerically zero")
    return math.exp(log_d3)


def threshold_z(spec: DistributionSpec, delta3: float) -> float:
    """A level z > 1 with ``F(z) - F(1) <= delta3``, chosen as large as allowed."""
    if spec.is_constant:
        raise ValueError("no 1+ mass: distribution is constant")
    if not 0.0 < delta3 < 1.0:
        raise ValueError("delta3 must lie in (0, 1)")
    tail = 1.0 - spec.p
    if spec.family == "two_point":
        return (1.0 + spec.b) / 2.0
    if spec.family == "one_plus_exp":
        if delta3 >= tail:
            raise ValueError("delta3 covers all the 1+ mass; no finite z")
        return 1.0 - math.log1p(-delta3 / tail) / spec.rate
    return 1.0 + spec.width * min(1.0, delta3 / tail)
