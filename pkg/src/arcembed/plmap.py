"""Exact algebra of piecewise-linear self-maps of [0,1].

A map is stored as its canonical breakpoint list: strictly increasing
x-coordinates from 0 to 1, values in [0,1], and no interior breakpoint
collinear with its neighbours.  Canonical form makes map equality plain
tuple equality, which is what lets the factorization identities downstream
be checked bit-exactly.
"""

from __future__ import annotations

import bisect
from dataclasses import dataclass
from enum import Enum
from fractions import Fraction
from typing import Iterable, Optional, Sequence


class OutOfDomain(ValueError):
    """Argument outside [0,1]."""


Pair = tuple[Fraction, Fraction]


def _canonicalize(points: Sequence[Pair]) -> tuple[Pair, ...]:
    pts = [(Fraction(x), Fraction(y)) for x, y in points]
    out: list[Pair] = []
    for p in pts:
        if out and p[0] == out[-1][0]:
            if p[1] != out[-1][1]:
                raise ValueError("duplicate x with conflicting values")
            continue
        out.append(p)
    # Drop interior points collinear with their neighbours.
    i = 1
    while i < len(out) - 1:
        (x0, y0), (x1, y1), (x2, y2) = out[i - 1], out[i], out[i + 1]
        if (x1 - x0) * (y2 - y1) == (y1 - y0) * (x2 - x1):
            del out[i]
            if i > 1:
                i -= 1
        else:
            i += 1
    return tuple(out)


@dataclass(frozen=True)
class PLMap:
    breakpoints: tuple[Pair, ...]

    def __post_init__(self):
        bps = self.breakpoints
        if len(bps) < 2:
            raise ValueError("need at least endpoints 0 and 1")
        xs = [x for x, _ in bps]
        if any(b <= a for a, b in zip(xs, xs[1:])):
            raise ValueError("breakpoint x-coordinates must be strictly increasing")
        if xs[0] != 0 or xs[-1] != 1:
            raise ValueError("domain must be exactly [0,1]")
        for _, y in bps:
            if not (0 <= y <= 1):
                raise ValueError("values must lie in [0,1]")
        if _canonicalize(bps) != bps:
            raise ValueError("breakpoints not in canonical form; use from_pairs")

    @classmethod
    def from_pairs(cls, points: Iterable) -> "PLMap":
        pts = [(Fraction(x), Fraction(y)) for x, y in points]
        pts.sort(key=lambda p: p[0])
        return cls(_canonicalize(pts))

    @property
    def xs(self) -> tuple[Fraction, ...]:
        return tuple(x for x, _ in self.breakpoints)

    @property
    def ys(self) -> tuple[Fraction, ...]:
        return tuple(y for _, y in self.breakpoints)

    def pieces(self) -> list[tuple[Fraction, Fraction, Fraction, Fraction]]:
        """(x0, x1, y0, y1) per linear piece."""
        b = self.breakpoints
        return [(b[i][0], b[i + 1][0], b[i][1], b[i + 1][1]) for i in range(len(b) - 1)]

    def _piece_index(self, x: Fraction) -> int:
        xs = self.xs
        i = bisect.bisect_right(xs, x) - 1
        if i >= len(xs) - 1:
            i = len(xs) - 2
        return i

    def __call__(self, x) -> Fraction:
        x = Fraction(x)
        if not (0 <= x <= 1):
            raise OutOfDomain(f"{x} outside [0,1]")
        i = self._piece_index(x)
        x0, y0 = self.breakpoints[i]
        x1, y1 = self.breakpoints[i + 1]
        return y0 + (y1 - y0) * (x - x0) / (x1 - x0)

    def slope_right(self, x: Fraction) -> Optional[Fraction]:
        """Slope on the piece immediately right of x, None at x = 1."""
        if x >= 1:
            return None
        i = self._piece_index(x)
        x0, x1, y0, y1 = self.pieces()[i]
        if x == x1:  # x is the right endpoint of piece i; use the next piece
            x0, x1, y0, y1 = self.pieces()[i + 1]
        return (y1 - y0) / (x1 - x0)

    def slope_left(self, x: Fraction) -> Optional[Fraction]:
        """Slope on the piece immediately left of x, None at x = 0."""
        if x <= 0:
            return None
        xs = self.xs
        i = bisect.bisect_left(xs, x) - 1
        if i < 0:
            i = 0
        x0, x1, y0, y1 = self.pieces()[i]
        return (y1 - y0) / (x1 - x0)


def evaluate(f: PLMap, x) -> Fraction:
    return f(x)


def identity_map() -> PLMap:
    return PLMap(((Fraction(0), Fraction(0)), (Fraction(1), Fraction(1))))


def tent(m: int) -> PLMap:
    """The m-tent map: value 0 at even j/m, 1 at odd j/m, linear between."""
    if m < 1:
        raise ValueError("tent order must be >= 1")
    pts = [(Fraction(j, m), Fraction(j % 2)) for j in range(m + 1)]
    return PLMap.from_pairs(pts)


def compose(f: PLMap, g: PLMap) -> PLMap:
    """Exact composition f o g in canonical form.

    Breakpoints of the result are the breakpoints of g together with the
    g-preimages of the breakpoints of f.
    """
    xs: set[Fraction] = set(g.xs)
    f_levels = set(f.xs)
    for x0, x1, y0, y1 in g.pieces():
        if y0 == y1:
            continue
        lo, hi = (y0, y1) if y0 <= y1 else (y1, y0)
        for lev in f_levels:
            if lo <= lev <= hi:
                t = (lev - y0) / (y1 - y0)
                xs.add(x0 + t * (x1 - x0))
    pts = [(x, f(g(x))) for x in sorted(xs)]
    return PLMap.from_pairs(pts)


def canonical_equal(f: PLMap, g: PLMap) -> bool:
    return f.breakpoints == g.breakpoints


def interior_extrema(f: PLMap, lo, hi) -> list[Fraction]:
    """Strict local extremum locations of f inside the open interval (lo,hi).

    Only genuine slope sign flips count; plateau shoulders are not strict
    extrema.  Endpoints of [0,1] are never extrema under this convention.
    """
    lo = Fraction(lo)
    hi = Fraction(hi)
    out = []
    pieces = f.pieces()
    for i in range(len(pieces) - 1):
        x = pieces[i][1]
        if not (lo < x < hi):
            continue
        s_l = (pieces[i][3] - pieces[i][2]) / (pieces[i][1] - pieces[i][0])
        s_r = (pieces[i + 1][3] - pieces[i + 1][2]) / (pieces[i + 1][1] - pieces[i + 1][0])
        if (s_l > 0 and s_r < 0) or (s_l < 0 and s_r > 0):
            out.append(x)
    return out


class BranchKind(Enum):
    INCREASING = "increasing"
    DECREASING = "decreasing"
    LOCAL_MAX = "local_max"
    LOCAL_MIN = "local_min"
    CONSTANT = "constant"
    CONSTANT_LEFT = "constant_left"  # flat on the left side, sloped right
    CONSTANT_RIGHT = "constant_right"  # sloped left, flat on the right side


def _sign(x: Fraction) -> int:
    return (x > 0) - (x < 0)


@dataclass(frozen=True)
class Branch:
    left: Optional[int]  # sign of the slope just left of x (None at x=0)
    right: Optional[int]  # sign of the slope just right of x (None at x=1)

    @property
    def kind(self) -> BranchKind:
        l, r = self.left, self.right
        if l is None:
            l = r
        if r is None:
            r = l
        if l > 0 and r > 0:
            return BranchKind.INCREASING
        if l < 0 and r < 0:
            return BranchKind.DECREASING
        if l > 0 and r < 0:
            return BranchKind.LOCAL_MAX
        if l < 0 and r > 0:
            return BranchKind.LOCAL_MIN
        if l == 0 and r == 0:
            return BranchKind.CONSTANT
        if l == 0:
            return BranchKind.CONSTANT_LEFT
        return BranchKind.CONSTANT_RIGHT


def branch_at(f: PLMap, x) -> Branch:
    x = Fraction(x)
    if not (0 <= x <= 1):
        raise OutOfDomain(f"{x} outside [0,1]")
    sl = f.slope_left(x)
    sr = f.slope_right(x)
    return Branch(
        None if sl is None else _sign(sl),
        None if sr is None else _sign(sr),
    )


def is_homeomorphism(f: PLMap) -> bool:
    slopes = [(y1 - y0) / (x1 - x0) for x0, x1, y0, y1 in f.pieces()]
    if all(s > 0 for s in slopes) and f(0) == 0 and f(1) == 1:
        return True
    if all(s < 0 for s in slopes) and f(0) == 1 and f(1) == 0:
        return True
    return False


def is_open_interval_map(f: PLMap) -> bool:
    """Openness of a PL self-map of [0,1].

    A PL map is open iff it sends {0,1} into {0,1}, has no constant piece,
    every interior strict local extremum value lies in {0,1}, and it is onto
    [0,1].  Whether the map is additionally a homeomorphism is reported
    separately by `is_homeomorphism`.
    """
    if f(0) not in (0, 1) or f(1) not in (0, 1):
        return False
    for x0, x1, y0, y1 in f.pieces():
        if y0 == y1:
            return False
    for x in interior_extrema(f, 0, 1):
        if f(x) not in (0, 1):
            return False
    ys = f.ys
    if min(ys) != 0 or max(ys) != 1:
        return False
    return True


def level_crossings(f: PLMap, y, lo, hi) -> list[Fraction]:
    """All solutions of f(x) = y in [lo,hi].

    Constant pieces sitting at the level contribute their (clipped) endpoint
    abscissae rather than a continuum.
    """
    y = Fraction(y)
    lo = Fraction(lo)
    hi = Fraction(hi)
    if not (0 <= y <= 1):
        return []
    sols: set[Fraction] = set()
    for x0, x1, y0, y1 in f.pieces():
        if y0 == y1:
            if y0 == y:
                a = max(x0, lo)
                b = min(x1, hi)
                if a <= b:
                    sols.add(a)
                    sols.add(b)
            continue
        ylo, yhi = (y0, y1) if y0 <= y1 else (y1, y0)
        if ylo <= y <= yhi:
            x = x0 + (y - y0) * (x1 - x0) / (y1 - y0)
            if lo <= x <= hi:
                sols.add(x)
    return sorted(sols)


@dataclass(frozen=True)
class SawtoothInfo:
    lo: Fraction
    hi: Fraction
    grid: int  # number of linear pieces in the pattern (the paper's m)
    height: Fraction

    @property
    def teeth(self) -> Fraction:
        return Fraction(self.grid, 2)

    @property
    def boundaries(self) -> tuple[Fraction, ...]:
        w = (self.hi - self.lo) / self.grid
        return tuple(self.lo + j * w for j in range(self.grid + 1))

    def tooth(self, j: int) -> tuple[Fraction, Fraction]:
        """The j-th full tooth (1-based)."""
        if not (1 <= j <= self.grid // 2):
            raise ValueError("tooth index out of range")
        w = (self.hi - self.lo) / self.grid
        return (self.lo + (2 * j - 2) * w, self.lo + 2 * j * w)

    def half_tooth(self) -> tuple[Fraction, Fraction]:
        if self.grid % 2 == 0:
            raise ValueError("pattern has no half-tooth")
        w = (self.hi - self.lo) / self.grid
        return (self.hi - w, self.hi)


def is_sawtooth(f: PLMap, a, b) -> Optional[SawtoothInfo]:
    """Recognize [a,b] as a sawtooth pattern of f.

    Matches an equispaced alternation 0, h, 0, h, ... with linear pieces
    between, for some integer grid count m >= 1 and height h in (0,1].
    """
    a = Fraction(a)
    b = Fraction(b)
    if not (0 <= a < b <= 1):
        raise ValueError("need 0 <= a < b <= 1")
    # Canonical restriction: interior breakpoints of f plus the endpoints,
    # with collinear interior points dropped.
    pts = [(a, f(a))]
    for x in f.xs:
        if a < x < b:
            pts.append((x, f(x)))
    pts.append((b, f(b)))
    pts = list(_canonicalize(pts))
    m = len(pts) - 1
    if pts[0][1] != 0:
        return None
    w = (b - a) / m
    height: Optional[Fraction] = None
    for j, (x, y) in enumerate(pts):
        if x != a + j * w:
            return None
        if j % 2 == 0:
            if y != 0:
                return None
        else:
            if height is None:
                height = y
            if y != height:
                return None
    if height is None or not (0 < height <= 1):
        return None
    return SawtoothInfo(a, b, m, height)


# --- range helpers used throughout the visor machinery ---------------------


def range_min(f: PLMap, lo, hi) -> Fraction:
    """Exact min of f over [lo,hi] (attained at a breakpoint or endpoint)."""
    lo = Fraction(lo)
    hi = Fraction(hi)
    vals = [f(lo), f(hi)]
    for x in f.xs:
        if lo < x < hi:
            vals.append(f(x))
    return min(vals)


def range_max(f: PLMap, lo, hi) -> Fraction:
    lo = Fraction(lo)
    hi = Fraction(hi)
    vals = [f(lo), f(hi)]
    for x in f.xs:
        if lo < x < hi:
            vals.append(f(x))
    return max(vals)


# --- JSON wire format -------------------------------------------------------

SCHEMA = "plmap/1"


def to_json_dict(f: PLMap) -> dict:
    from . import jsonio

    return {
        "schema": SCHEMA,
        "breakpoints": [
            [jsonio.format_rational(x), jsonio.format_rational(y)]
            for x, y in f.breakpoints
        ],
    }


def from_json_dict(doc: dict) -> PLMap:
    from . import jsonio

    if doc.get("schema", SCHEMA) != SCHEMA:
        raise ValueError(f"unexpected schema {doc.get('schema')!r}")
    pts = [
        (jsonio.parse_rational(x), jsonio.parse_rational(y))
        for x, y in doc["breakpoints"]
    ]
    return PLMap.from_pairs(pts)
