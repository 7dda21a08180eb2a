"""Exact planar primitives: points, segments, polylines, and the predicates
built on them.

All coordinates are `fractions.Fraction`; every predicate is decided by exact
rational arithmetic.  There are no tolerances anywhere in this module, because
the constructions downstream rely on exact equalities that an epsilon would
destroy.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from fractions import Fraction
from typing import Iterable, Optional, Sequence, Union


class InvalidLoop(ValueError):
    """Raised when a closed-curve argument is not a simple closed polyline."""


@dataclass(frozen=True)
class Point:
    x: Fraction
    y: Fraction

    def __add__(self, other: "Point") -> "Point":
        return Point(self.x + other.x, self.y + other.y)

    def __sub__(self, other: "Point") -> "Point":
        return Point(self.x - other.x, self.y - other.y)

    def scaled(self, k: Fraction) -> "Point":
        return Point(self.x * k, self.y * k)

    def dot(self, other: "Point") -> Fraction:
        return self.x * other.x + self.y * other.y

    def cross(self, other: "Point") -> Fraction:
        return self.x * other.y - self.y * other.x

    def dist_sq(self, other: "Point") -> Fraction:
        dx = self.x - other.x
        dy = self.y - other.y
        return dx * dx + dy * dy


def pt(x, y) -> Point:
    """Convenience constructor accepting anything Fraction() accepts."""
    return Point(Fraction(x), Fraction(y))


@dataclass(frozen=True)
class Segment:
    a: Point
    b: Point

    def __post_init__(self):
        if self.a == self.b:
            raise ValueError("segment endpoints must be distinct")

    def direction(self) -> Point:
        return self.b - self.a

    def at(self, t: Fraction) -> Point:
        return self.a + self.direction().scaled(t)

    def bbox(self):
        ax, bx = (self.a.x, self.b.x) if self.a.x <= self.b.x else (self.b.x, self.a.x)
        ay, by = (self.a.y, self.b.y) if self.a.y <= self.b.y else (self.b.y, self.a.y)
        return ax, ay, bx, by


@dataclass(frozen=True)
class Polyline:
    vertices: tuple[Point, ...]

    def __post_init__(self):
        if len(self.vertices) < 2:
            raise ValueError("polyline needs at least 2 vertices")
        for p, q in zip(self.vertices, self.vertices[1:]):
            if p == q:
                raise ValueError("consecutive polyline vertices must be distinct")

    def segments(self) -> list[Segment]:
        return [Segment(p, q) for p, q in zip(self.vertices, self.vertices[1:])]


def polyline(points: Iterable) -> Polyline:
    verts = []
    for p in points:
        if isinstance(p, Point):
            verts.append(p)
        else:
            x, y = p
            verts.append(pt(x, y))
    return Polyline(tuple(verts))


def _bboxes_disjoint(b1, b2) -> bool:
    return b1[2] < b2[0] or b2[2] < b1[0] or b1[3] < b2[1] or b2[3] < b1[1]


IntersectionKind = Union[None, Point, Segment]


def seg_intersection(s1: Segment, s2: Segment) -> IntersectionKind:
    """Exact classification of the intersection of two segments.

    Returns None (disjoint), a Point, or a Segment for collinear overlap.
    """
    d1 = s1.direction()
    d2 = s2.direction()
    diff = s2.a - s1.a
    denom = d1.cross(d2)
    if denom != 0:
        t = diff.cross(d2) / denom
        u = diff.cross(d1) / denom
        if 0 <= t <= 1 and 0 <= u <= 1:
            return s1.at(t)
        return None
    # Parallel.  Not collinear unless diff is parallel to d1 too.
    if diff.cross(d1) != 0:
        return None
    dd = d1.dot(d1)
    t0 = (s2.a - s1.a).dot(d1) / dd
    t1 = (s2.b - s1.a).dot(d1) / dd
    lo = max(Fraction(0), min(t0, t1))
    hi = min(Fraction(1), max(t0, t1))
    if lo > hi:
        return None
    if lo == hi:
        return s1.at(lo)
    return Segment(s1.at(lo), s1.at(hi))


def _float_lo(x: Fraction) -> float:
    f = float(x)
    return math.nextafter(math.nextafter(f, -math.inf), -math.inf)


def _float_hi(x: Fraction) -> float:
    f = float(x)
    return math.nextafter(math.nextafter(f, math.inf), math.inf)


def polyline_self_intersections(p: Polyline, limit: int = 16) -> list[tuple[int, int]]:
    """Offending segment-index pairs: non-adjacent segments that meet, or
    adjacent segments meeting anywhere besides their shared vertex.

    Candidate pairs are culled by an x-sweep over outward-rounded float
    bounding boxes (conservative, so no pair is missed); every surviving pair
    is decided exactly.
    """
    segs = p.segments()
    n = len(segs)
    boxes = [s.bbox() for s in segs]
    fboxes = [
        (_float_lo(b[0]), _float_lo(b[1]), _float_hi(b[2]), _float_hi(b[3]))
        for b in boxes
    ]
    order = sorted(range(n), key=lambda i: fboxes[i][0])
    active: list[int] = []
    bad: list[tuple[int, int]] = []
    for idx in order:
        x0 = fboxes[idx][0]
        y0, y1 = fboxes[idx][1], fboxes[idx][3]
        active = [a for a in active if fboxes[a][2] >= x0]
        for a in active:
            if fboxes[a][3] < y0 or y1 < fboxes[a][1]:
                continue
            i, j = (a, idx) if a < idx else (idx, a)
            if _bboxes_disjoint(boxes[i], boxes[j]):
                continue
            inter = seg_intersection(segs[i], segs[j])
            if j == i + 1:
                shared = p.vertices[j]
                if not (isinstance(inter, Point) and inter == shared):
                    bad.append((i, j))
            else:
                if inter is not None:
                    bad.append((i, j))
            if len(bad) >= limit:
                bad.sort()
                return bad
        active.append(idx)
    bad.sort()
    return bad


def polyline_simple(p: Polyline) -> bool:
    """True iff no two non-adjacent segments meet and adjacent segments meet
    only at their shared vertex."""
    return not polyline_self_intersections(p, limit=1)


def point_segment_dist_sq(point: Point, seg: Segment) -> Fraction:
    d = seg.direction()
    t = (point - seg.a).dot(d) / d.dot(d)
    if t < 0:
        t = Fraction(0)
    elif t > 1:
        t = Fraction(1)
    return point.dist_sq(seg.at(t))


def segment_dist_sq(s1: Segment, s2: Segment) -> Fraction:
    if seg_intersection(s1, s2) is not None:
        return Fraction(0)
    return min(
        point_segment_dist_sq(s1.a, s2),
        point_segment_dist_sq(s1.b, s2),
        point_segment_dist_sq(s2.a, s1),
        point_segment_dist_sq(s2.b, s1),
    )


def min_clearance_sq(p: Polyline) -> Optional[Fraction]:
    """Minimum squared distance between non-adjacent segments of `p`.

    Returns None (the +infinity sentinel) when the polyline has fewer than
    three segments, so that downstream width selection degrades gracefully.
    Squared distances keep everything inside the rational field.
    """
    segs = p.segments()
    if len(segs) < 3:
        return None
    best: Optional[Fraction] = None
    for i in range(len(segs)):
        for j in range(i + 2, len(segs)):
            d = segment_dist_sq(segs[i], segs[j])
            if best is None or d < best:
                best = d
    return best


class Location(Enum):
    INSIDE = "inside"
    ON_BOUNDARY = "on_boundary"
    OUTSIDE = "outside"


def _ring_vertices(loop: Polyline) -> tuple[Point, ...]:
    verts = loop.vertices
    if verts[0] == verts[-1]:
        verts = verts[:-1]
    if len(verts) < 3:
        raise InvalidLoop("closed curve needs at least 3 distinct vertices")
    return verts


def ring_segments(loop: Polyline) -> list[Segment]:
    verts = _ring_vertices(loop)
    return [Segment(verts[i], verts[(i + 1) % len(verts)]) for i in range(len(verts))]


def ring_simple(loop: Polyline) -> bool:
    """True iff the (implicitly or explicitly) closed polyline is a simple
    closed curve."""
    try:
        verts = _ring_vertices(loop)
    except InvalidLoop:
        return False
    n = len(verts)
    if len(set(verts)) != n:
        return False
    segs = [Segment(verts[i], verts[(i + 1) % n]) for i in range(n)]
    boxes = [s.bbox() for s in segs]
    for i in range(n):
        for j in range(i + 1, n):
            if _bboxes_disjoint(boxes[i], boxes[j]):
                continue
            inter = seg_intersection(segs[i], segs[j])
            adjacent = (j == i + 1) or (i == 0 and j == n - 1)
            if adjacent:
                shared = verts[j] if j == i + 1 else verts[0]
                if not (isinstance(inter, Point) and inter == shared):
                    return False
            else:
                if inter is not None:
                    return False
    return True


def point_on_segment(point: Point, seg: Segment) -> bool:
    d = seg.direction()
    if (point - seg.a).cross(d) != 0:
        return False
    t = (point - seg.a).dot(d) / d.dot(d)
    return 0 <= t <= 1


def point_vs_closed_curve(
    point: Point, loop: Polyline, *, check_simple: bool = True
) -> Location:
    """Exact inside/boundary/outside classification against a simple closed
    polyline (crossing parity of the upward vertical ray)."""
    if check_simple and not ring_simple(loop):
        raise InvalidLoop("loop is not a simple closed polyline")
    segs = ring_segments(loop)
    for s in segs:
        if point_on_segment(point, s):
            return Location.ON_BOUNDARY
    crossings = 0
    for s in segs:
        ay, by = s.a.y, s.b.y
        if ay == by:
            continue
        if (ay <= point.y < by) or (by <= point.y < ay):
            x_at = s.a.x + (point.y - s.a.y) * (s.b.x - s.a.x) / (s.b.y - s.a.y)
            if x_at > point.x:
                crossings ^= 1
    return Location.INSIDE if crossings else Location.OUTSIDE
