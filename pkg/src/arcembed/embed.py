"""Stagewise plane-embedding pipeline with exact certificates.

Stage 1 places the half-plane arc of the first bonding map.  Each refinement
draws the next map's arc inside an explicit piecewise-affine corridor around
the previous curve: the new arc's height coordinate is read as a parameter of
the previous curve and its depth as a transverse offset scaled into the
previous tube's halfwidth.  Marked levels are fixed points of that reading,
so marked images coincide across stages and whiskers persist literally.

The corridor image is drawn at sample resolution (the arc's vertices); all
stage guarantees are then established on the drawn object itself by exact
checks: injectivity, the squared-distance step bound at every vertex, every
bonding-map breakpoint and edge midpoints, and segment-exact accessibility
certificates against the tube.
"""

from __future__ import annotations

import bisect
from dataclasses import dataclass, replace
from fractions import Fraction
from typing import Optional, Sequence

from .geom import (
    Point,
    Polyline,
    Segment,
    polyline_self_intersections,
    polyline_simple,
    seg_intersection,
)
from .plmap import PLMap
from .visors import MarkedSet, all_visors_removable, check_order_hypothesis, marked
from .tuck import HalfPlaneArc, build_half_plane_arc


class PreconditionViolated(ValueError):
    def __init__(self, clause: str):
        self.clause = clause
        super().__init__(clause)


class TubeTooNarrow(RuntimeError):
    pass


# --------------------------------------------------------------------------
# Tubes
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class Tube:
    spine: Polyline
    params: tuple[Fraction, ...]
    halfwidth: Fraction
    side: int  # +1: offsets go to the right of travel
    quads: tuple[tuple[Point, ...], ...]  # one polygon per spine segment


def _taxicab_normal(seg: Segment, halfwidth: Fraction, side: int) -> Point:
    d = seg.direction()
    scale = halfwidth / (abs(d.x) + abs(d.y))
    # right of travel = rotate direction by -90 degrees
    return Point(d.y * scale * side, -d.x * scale * side)


def _clip_halfplane(poly: list[Point]) -> list[Point]:
    """Sutherland-Hodgman clip of a polygon against {x >= 0}."""
    out: list[Point] = []
    n = len(poly)
    for i in range(n):
        cur, nxt = poly[i], poly[(i + 1) % n]
        cin = cur.x >= 0
        nin = nxt.x >= 0
        if cin:
            out.append(cur)
        if cin != nin:
            t = cur.x / (cur.x - nxt.x)
            out.append(Point(Fraction(0), cur.y + t * (nxt.y - cur.y)))
    dedup: list[Point] = []
    for p in out:
        if not dedup or dedup[-1] != p:
            dedup.append(p)
    if dedup and dedup[0] == dedup[-1]:
        dedup.pop()
    return dedup


def _poly_area2(poly: Sequence[Point]) -> Fraction:
    s = Fraction(0)
    for i in range(len(poly)):
        a, b = poly[i], poly[(i + 1) % len(poly)]
        s += a.x * b.y - a.y * b.x
    return s


def _point_in_convexish(p: Point, poly: Sequence[Point]) -> bool:
    """Point-in-polygon by parity (works for any simple polygon)."""
    crossings = 0
    n = len(poly)
    for i in range(n):
        a, b = poly[i], poly[(i + 1) % n]
        if a.y == b.y:
            continue
        if (a.y <= p.y < b.y) or (b.y <= p.y < a.y):
            x_at = a.x + (p.y - a.y) * (b.x - a.x) / (b.y - a.y)
            if x_at > p.x:
                crossings ^= 1
    return bool(crossings)


def _point_on_polygon_boundary(p: Point, poly: Sequence[Point]) -> bool:
    from .geom import point_on_segment

    n = len(poly)
    for i in range(n):
        a, b = poly[i], poly[(i + 1) % n]
        if a == b:
            continue
        if point_on_segment(p, Segment(a, b)):
            return True
    return False


def build_tube(curve: Polyline, params: tuple[Fraction, ...], halfwidth: Fraction,
               side: int = 1) -> Tube:
    """Gate-based tube: at every interior vertex the two neighbouring quads
    share exactly the averaged-normal cross segment, so adjacent quads meet in
    an edge and nothing else.  At joints turning by more than a right angle
    the gate is pinched to the vertex itself (the tube tapers to width zero
    there); constant-width thickenings of such needle joints would otherwise
    necessarily self-overlap."""
    segs = curve.segments()
    normals = [_taxicab_normal(s, halfwidth, side) for s in segs]
    zero = Point(Fraction(0), Fraction(0))
    gates: list[Point] = []
    for i, v in enumerate(curve.vertices):
        if i == 0:
            g = normals[0]
        elif i == len(curve.vertices) - 1:
            g = normals[-1]
        else:
            d_prev = segs[i - 1].direction()
            d_next = segs[i].direction()
            if d_prev.dot(d_next) <= 0:
                g = zero  # sharp turn: pinch the tube to the joint
            else:
                g = Point(
                    (normals[i - 1].x + normals[i].x) / 2,
                    (normals[i - 1].y + normals[i].y) / 2,
                )
                if g.x == 0 and g.y == 0:
                    g = zero
        gates.append(g)
    panels: list[tuple[Point, Point, Point, Point]] = []
    for i in range(len(segs)):
        v0, v1 = curve.vertices[i], curve.vertices[i + 1]
        g0, g1 = gates[i], gates[i + 1]
        if g0 == zero and g1 == zero:
            # pinched at both ends: split at the midpoint so each half tapers
            mid = Point((v0.x + v1.x) / 2, (v0.y + v1.y) / 2)
            panels.append((v0, mid, g0, normals[i]))
            panels.append((mid, v1, normals[i], g1))
        else:
            panels.append((v0, v1, g0, g1))
    quads = []
    for v0, v1, g0, g1 in panels:
        poly = []
        for p in (v0 + g0, v1 + g1, v1 - g1, v0 - g0):
            if not poly or poly[-1] != p:
                poly.append(p)
        if poly[0] == poly[-1]:
            poly.pop()
        if len(poly) < 3:
            raise TubeTooNarrow("tube quad degenerate")
        clipped = _clip_halfplane(poly)
        if len(clipped) < 3:
            raise TubeTooNarrow("tube quad collapsed under the boundary clip")
        quads.append(tuple(clipped))
    return Tube(curve, params, halfwidth, side, tuple(quads))


def tube_quads_ok(tube: Tube) -> bool:
    """Pairwise check that quad interiors are disjoint (adjacent quads then
    share exactly their common gate edge on the boundary)."""
    quads = tube.quads
    boxes = []
    for q in quads:
        xs = [p.x for p in q]
        ys = [p.y for p in q]
        boxes.append((min(xs), min(ys), max(xs), max(ys)))
    n = len(quads)
    for i in range(n):
        for j in range(i + 1, n):
            b1, b2 = boxes[i], boxes[j]
            if b1[2] < b2[0] or b2[2] < b1[0] or b1[3] < b2[1] or b2[3] < b1[1]:
                continue
            if _polygon_interiors_overlap(quads[i], quads[j]):
                return False
    return True


def _strictly_inside(p: Point, poly: Sequence[Point]) -> bool:
    return not _point_on_polygon_boundary(p, poly) and _point_in_convexish(p, poly)


def _edges(poly: Sequence[Point]):
    n = len(poly)
    for i in range(n):
        a, b = poly[i], poly[(i + 1) % n]
        if a != b:
            yield Segment(a, b)


def _edge_enters_interior(seg: Segment, poly: Sequence[Point]) -> bool:
    """Exact test: does any point of the segment lie strictly inside poly?
    The segment is cut at its boundary intersections; each open piece lies
    entirely inside or outside, so piece midpoints decide."""
    d = seg.direction()
    dd = d.dot(d)
    cuts = {Fraction(0), Fraction(1)}
    for edge in _edges(poly):
        inter = seg_intersection(seg, edge)
        if inter is None:
            continue
        if isinstance(inter, Point):
            cuts.add((inter - seg.a).dot(d) / dd)
        else:
            cuts.add((inter.a - seg.a).dot(d) / dd)
            cuts.add((inter.b - seg.a).dot(d) / dd)
    ts = sorted(cuts)
    for t0, t1 in zip(ts, ts[1:]):
        mid = seg.at((t0 + t1) / 2)
        if _strictly_inside(mid, poly):
            return True
    return False


def _polygon_interiors_overlap(q1, q2) -> bool:
    for seg in _edges(q1):
        if _edge_enters_interior(seg, q2):
            return True
    for seg in _edges(q2):
        if _edge_enters_interior(seg, q1):
            return True
    # containment without boundary contact
    if _strictly_inside(q1[0], q2) or _strictly_inside(q2[0], q1):
        return True
    return False


def point_in_tube(tube: Tube, p: Point) -> bool:
    for q in tube.quads:
        if _point_in_convexish(p, q) or _point_on_polygon_boundary(p, q):
            return True
    return False


# --------------------------------------------------------------------------
# Whiskers and certificates
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class Whisker:
    owner: int  # index into the point schedule (1-based)
    probe: Polyline  # last vertex is the marked image


@dataclass(frozen=True)
class AccessibilityCertificate:
    stage_index: int
    owner: int
    passed: bool
    witnesses: tuple[str, ...]


@dataclass(frozen=True)
class EmbeddingStage:
    index: int
    eps: Fraction
    fmap: PLMap
    curve: Polyline
    params: tuple[Fraction, ...]
    marks: tuple[tuple[int, int], ...]  # (schedule owner, vertex index)
    tube: Tube
    whiskers: tuple[Whisker, ...]
    prev_curve: Optional[Polyline] = None
    prev_params: Optional[tuple[Fraction, ...]] = None

    def mark_point(self, owner: int) -> Point:
        for o, idx in self.marks:
            if o == owner:
                return self.curve.vertices[idx]
        raise KeyError(owner)


def _probe_vs_quad(seg: Segment, quad, terminal: Point) -> Optional[str]:
    """None when the segment meets the quad at most in the terminal point;
    otherwise a witness string."""
    n = len(quad)
    touched_terminal = False
    for i in range(n):
        if quad[i] == quad[(i + 1) % n]:
            continue
        edge = Segment(quad[i], quad[(i + 1) % n])
        inter = seg_intersection(seg, edge)
        if inter is None:
            continue
        if isinstance(inter, Point):
            if inter == terminal:
                touched_terminal = True
                continue
            return f"probe edge crosses tube edge at ({inter.x},{inter.y})"
        return "probe edge overlaps a tube edge"
    mid = Point((seg.a.x + seg.b.x) / 2, (seg.a.y + seg.b.y) / 2)
    if _point_in_convexish(mid, quad):
        return "probe edge passes through tube interior"
    for endpoint in (seg.a, seg.b):
        if endpoint == terminal:
            continue
        if _point_in_convexish(endpoint, quad):
            return f"probe vertex ({endpoint.x},{endpoint.y}) inside tube"
    return None


def access_certificates(stage: EmbeddingStage) -> list[AccessibilityCertificate]:
    """Exact segment-level verdict per whisker against every tube quad."""
    out = []
    for w in stage.whiskers:
        terminal = w.probe.vertices[-1]
        witnesses: list[str] = []
        if not point_in_tube(stage.tube, terminal):
            witnesses.append("terminal vertex not on the tube")
        for seg in w.probe.segments():
            sb = seg.bbox()
            for q in stage.tube.quads:
                xs = [p.x for p in q]
                ys = [p.y for p in q]
                if sb[2] < min(xs) or max(xs) < sb[0] or sb[3] < min(ys) or max(ys) < sb[1]:
                    continue
                wit = _probe_vs_quad(seg, q, terminal)
                if wit is not None:
                    witnesses.append(wit)
                    break
            if witnesses:
                break
        out.append(
            AccessibilityCertificate(stage.index, w.owner, not witnesses, tuple(witnesses))
        )
    return out


# --------------------------------------------------------------------------
# Stage construction
# --------------------------------------------------------------------------


def _halfwidth_from_clearance(curve: Polyline) -> Fraction:
    from .geom import min_clearance_sq

    cl = min_clearance_sq(curve)
    if cl is None:
        return Fraction(1, 4)
    # largest power-of-two h with 4 h^2 <= clearance
    h = Fraction(1, 2)
    while 4 * h * h > cl:
        h /= 2
        if h < Fraction(1, 2**64):
            raise TubeTooNarrow("clearance too small for a rational tube width")
    return h


def _curve_at_param(curve: Polyline, params: tuple[Fraction, ...], t: Fraction) -> Point:
    i = bisect.bisect_right(params, t) - 1
    if i >= len(params) - 1:
        i = len(params) - 2
    if i < 0:
        i = 0
    t0, t1 = params[i], params[i + 1]
    lam = (t - t0) / (t1 - t0)
    p0, p1 = curve.vertices[i], curve.vertices[i + 1]
    return Point(p0.x + lam * (p1.x - p0.x), p0.y + lam * (p1.y - p0.y))


def init_stage(
    f1: PLMap, Z1: MarkedSet, eps1, owners: Optional[Sequence[int]] = None
) -> EmbeddingStage:
    """Base stage: the half-plane arc of f1 with one whisker per marked point
    extending to x = -1.  `owners` maps the sorted marked points to schedule
    indices (identity when omitted)."""
    eps1 = Fraction(eps1)
    if owners is None:
        owners = sorted_owner_indices(Z1)
    arc = build_half_plane_arc(f1, Z1, eps1)
    h = _halfwidth_from_clearance(arc.path)
    stage = None
    for _ in range(8):
        tube = build_tube(arc.path, arc.params, h)
        if tube_quads_ok(tube):
            whiskers = []
            for j, z in enumerate(Z1.points, start=1):
                lvl = f1(z)
                probe = Polyline((Point(Fraction(-1), lvl), Point(Fraction(0), lvl)))
                whiskers.append(Whisker(owners[j - 1], probe))
            stage = EmbeddingStage(
                index=1,
                eps=eps1,
                fmap=f1,
                curve=arc.path,
                params=arc.params,
                marks=tuple((owners[j - 1], idx) for j, idx in arc.marks),
                tube=tube,
                whiskers=tuple(whiskers),
            )
            certs = access_certificates(stage)
            if all(c.passed for c in certs):
                return stage
        h /= 2
    raise TubeTooNarrow("no tube width produced passing certificates")


def _lipschitz(curve: Polyline, params: tuple[Fraction, ...]) -> Fraction:
    best = Fraction(0)
    for i in range(len(params) - 1):
        dp = params[i + 1] - params[i]
        d = curve.vertices[i + 1] - curve.vertices[i]
        best = max(best, (abs(d.x) + abs(d.y)) / dp)
    return best


def _approx_unit(v: Point) -> Point:
    """Rational vector of Euclidean length within 2^-38 of 1."""
    nn = v.x * v.x + v.y * v.y
    if nn == 0:
        raise ValueError("cannot normalize the zero vector")
    s = 1 << 40
    import math as _math

    root = _math.isqrt((nn.numerator * s * s) // nn.denominator)
    if root == 0:
        root = 1
    return v.scaled(Fraction(s, root))


def _fan_directions(a: Point, b: Point, ccw: bool, depth: int = 5) -> list[Point]:
    """Near-unit waypoint directions strictly between a and b, rotating the
    given way, with consecutive dots >= 31/32 (inscribed-polygon fan)."""
    if depth == 0:
        return []
    d = a.dot(b)
    if d >= Fraction(31, 32):
        return []
    if d <= Fraction(-1, 2):
        mid = Point(-a.y, a.x) if ccw else Point(a.y, -a.x)
    else:
        mid = _approx_unit(Point(a.x + b.x, a.y + b.y))
    return (
        _fan_directions(a, mid, ccw, depth - 1)
        + [mid]
        + _fan_directions(mid, b, ccw, depth - 1)
    )


_ZERO_POINT = Point(Fraction(0), Fraction(0))
_LEG_KICK = Fraction(1, 1 << 20)


@dataclass(frozen=True)
class _WallPiece:
    s0: Fraction
    s1: Fraction
    v0: Point
    d: Point  # full segment vector
    normal: Point
    trim_lo: Fraction  # base coefficient floor is  mu * trim_lo
    trim_hi: Fraction  # base coefficient ceiling is 1 + mu * trim_hi
    kick_lo: Point = _ZERO_POINT  # extra mu-scaled offset while floor-clamped


@dataclass(frozen=True)
class _JointPiece:
    s0: Fraction
    s1: Fraction
    v: Point
    dir0: Point
    dir1: Point


def _parallel_pieces(
    curve: Polyline,
    params: tuple[Fraction, ...],
    side: int,
    eps_budget: Fraction,
) -> list:
    """Piecewise description of the trimmed-parallel structure of the curve:
    the image of (sigma, mu) is the point of the distance-mu parallel curve.

    Walls carry constant near-unit normals with their base runs trimmed at
    the exact miter feet of adjacent inner corners (the trim is linear in mu,
    so each sweep rides the true trimmed parallel); inner joints collapse to
    their miter point, outer joints get an inscribed circular fan.  Parallels
    at distinct mu are nested, which is what keeps corridor images of
    distinct sweeps disjoint.
    """
    segs = curve.segments()
    n = len(segs)
    normals = [_approx_unit(Point(s.direction().y, -s.direction().x).scaled(side))
               for s in segs]
    lam = _lipschitz(curve, params)
    spans = [params[i + 1] - params[i] for i in range(n)]
    widths = [Fraction(0)] * (n + 1)
    w_cap = eps_budget / (16 * lam) if lam > 0 else None
    for i in range(1, n):
        w = min(spans[i - 1], spans[i]) / 4
        if w_cap is not None:
            w = min(w, w_cap)
        widths[i] = w

    # per interior joint: waypoints for the zone and wall trim coefficients
    joint_way: dict[int, list[Point]] = {}
    trim_end = [Fraction(0)] * n  # ceiling adjustment of wall i (from joint i+1)
    trim_start = [Fraction(0)] * n  # floor adjustment of wall i (from joint i)
    kick_start = [_ZERO_POINT] * n  # outgoing-leg separation at inner joints
    for i in range(1, n):
        n_a, n_b = normals[i - 1], normals[i]
        d_a, d_b = segs[i - 1].direction(), segs[i].direction()
        cr = d_a.cross(d_b)
        if cr == 0:
            joint_way[i] = [n_a, n_b]
        elif cr * side < 0:
            # inner corner: both offset lines meet at the miter point.  The
            # outgoing side carries a tiny perpendicular kick so that a sweep
            # dipping to the vertex (a marked pinch) leaves along a ray
            # distinct from the one it entered on.
            t_a = (n_b - n_a).cross(d_b) / cr
            t_b = (n_b - n_a).cross(d_a) / cr
            miter = n_a + d_a.scaled(t_a)
            kick = Point(-miter.y * _LEG_KICK, miter.x * _LEG_KICK)
            joint_way[i] = [miter, miter + kick]
            trim_end[i - 1] = t_a  # expected negative: the foot sits early
            trim_start[i] = t_b
            kick_start[i] = kick
        else:
            ccw = cr > 0
            joint_way[i] = [n_a] + _fan_directions(n_a, n_b, ccw) + [n_b]

    pieces: list = []
    for i in range(n):
        v0, v1 = curve.vertices[i], curve.vertices[i + 1]
        pieces.append(
            _WallPiece(
                params[i] + widths[i],
                params[i + 1] - widths[i + 1],
                v0,
                v1 - v0,
                normals[i],
                trim_start[i],
                trim_end[i],
                kick_start[i],
            )
        )
        if i + 1 < n:
            za = params[i + 1] - widths[i + 1]
            zb = params[i + 1] + widths[i + 1]
            way = joint_way[i + 1]
            k = len(way) - 1
            for j in range(k):
                pieces.append(
                    _JointPiece(
                        za + (zb - za) * j / k,
                        za + (zb - za) * (j + 1) / k,
                        v1,
                        way[j],
                        way[j + 1],
                    )
                )
    return pieces


def _squeeze(y: Fraction, lo_node: Fraction, hi_node: Fraction, bound: Fraction) -> Fraction:
    """PL reparameterization [-(bound), 1+bound] -> [0,1]: identity on
    [lo_node, hi_node], affine squeezes outside."""
    if lo_node <= y <= hi_node:
        return y
    if y < lo_node:
        if y <= -bound:
            return Fraction(0)
        return lo_node * (y + bound) / (lo_node + bound)
    if y >= 1 + bound:
        return Fraction(1)
    return hi_node + (1 - hi_node) * (y - hi_node) / (1 + bound - hi_node)


def refine_stage(
    prev: EmbeddingStage,
    f_next: PLMap,
    Z_next: MarkedSet,
    eps_next,
    owners: Optional[Sequence[int]] = None,
) -> EmbeddingStage:
    """Draw the next map's arc through the corridor around the previous curve.

    Marked levels must keep away from 0 and 1 (the squeeze that absorbs the
    perturbed heights' overshoot is the identity around them, which is what
    pins marked images in place across stages).
    """
    eps_next = Fraction(eps_next)
    if owners is None:
        owners = sorted_owner_indices(Z_next)
    pts = Z_next.points
    if len(set(pts)) != len(pts):
        raise PreconditionViolated("marked projections must be distinct")
    try:
        check_order_hypothesis(f_next, Z_next)
    except Exception:
        raise PreconditionViolated("bonding map must be order-preserving on the marks")
    rep = all_visors_removable(f_next, Z_next)
    if not rep.all_removable:
        raise PreconditionViolated("all visors must be removable")
    levels = [f_next(z) for z in pts]
    if levels and (min(levels) <= 0 or max(levels) >= 1):
        raise PreconditionViolated("marked levels must lie strictly inside (0,1)")

    lam = _lipschitz(prev.curve, prev.params)
    eps_tuck = min(eps_next / 4, eps_next / (8 * lam), Fraction(1, 16))
    if levels:
        lo_node = min(levels) / 2
        hi_node = (1 + max(levels)) / 2
        eps_tuck = min(eps_tuck, lo_node / 2, (1 - hi_node) / 2)
    else:
        lo_node, hi_node = Fraction(1, 4), Fraction(3, 4)

    arc = build_half_plane_arc(f_next, Z_next, eps_tuck)
    w_arc = eps_tuck / 2  # depth extent of the half-plane picture
    offset_scale = prev.tube.halfwidth / (2 * w_arc)

    def squeeze(y: Fraction) -> Fraction:
        return _squeeze(y, lo_node, hi_node, eps_tuck)

    def unsqueeze(t: Fraction) -> Fraction:
        if lo_node <= t <= hi_node:
            return t
        if t < lo_node:
            return -eps_tuck + t * (lo_node + eps_tuck) / lo_node
        return hi_node + (t - hi_node) * (1 + eps_tuck - hi_node) / (1 - hi_node)

    def arc_at(t: Fraction) -> Point:
        return _curve_at_param(arc.path, arc.params, t)

    # Trimmed-parallel corridor.  The image of (sigma, mu) is the classical
    # offset-at-distance-mu structure of the previous curve: constant
    # (near-unit, rational) normals along segment walls, the exact miter
    # point at corners whose offset side is inner, and an inscribed circular
    # fan at corners whose offset side is outer.  Offsets at distinct mu are
    # then nested parallels, so images of distinct sweeps cannot cross; a
    # linearly interpolated gate family would instead fold wherever its
    # direction passes parallel to a segment.
    pieces = _parallel_pieces(prev.curve, prev.params, prev.tube.side, eps_next)
    piece_starts = [pc.s0 for pc in pieces]

    kink_levels: list[Fraction] = sorted(
        {unsqueeze(pc.s0) for pc in pieces} | {lo_node, hi_node}
    )

    def corridor(p: Point, scale_mult: Fraction) -> Point:
        t = squeeze(p.y)
        k = bisect.bisect_right(piece_starts, t) - 1
        k = min(max(k, 0), len(pieces) - 1)
        pc = pieces[k]
        mu = p.x * offset_scale * scale_mult
        if isinstance(pc, _JointPiece):
            lam = (t - pc.s0) / (pc.s1 - pc.s0)
            gx = pc.dir0.x + lam * (pc.dir1.x - pc.dir0.x)
            gy = pc.dir0.y + lam * (pc.dir1.y - pc.dir0.y)
            return Point(pc.v.x + gx * mu, pc.v.y + gy * mu)
        c = (t - pc.s0) / (pc.s1 - pc.s0)
        c_lo = mu * pc.trim_lo
        c_hi = 1 + mu * pc.trim_hi
        kick = _ZERO_POINT
        if c_lo > c_hi:
            c = (c_lo + c_hi) / 2  # erosion swallowed the wall; checks decide
        elif c < c_lo:
            c = c_lo
            kick = pc.kick_lo
        elif c > c_hi:
            c = c_hi
        return Point(
            pc.v0.x + c * pc.d.x + mu * (pc.normal.x + kick.x),
            pc.v0.y + c * pc.d.y + mu * (pc.normal.y + kick.y),
        )

    # Draw the corridor image at the arc's own vertices, then refine the
    # sampling wherever exactness checks fail: crossings of the kink heights
    # restore the exact piecewise structure, midpoints handle the (quadratic)
    # curvature of the gate interpolation.  If refinement stalls the
    # transverse scale is halved and the drawing restarted.
    eps_sq = eps_next * eps_next
    mark_params = {arc.params[idx]: j for j, idx in arc.marks}
    curve = None
    params = ()
    marks = []
    done = False
    scale_mult = Fraction(1)
    for _outer in range(4):
        sample = sorted(set(arc.params))
        image_cache: dict[Fraction, Point] = {}
        for _round in range(60):
            images: list[Point] = []
            ts: list[Fraction] = []
            for t in sample:
                q = image_cache.get(t)
                if q is None:
                    q = corridor(arc_at(t), scale_mult)
                    image_cache[t] = q
                if images and q == images[-1]:
                    continue
                images.append(q)
                ts.append(t)
            if len(images) > 40000:
                break
            curve = Polyline(tuple(images))
            params = tuple(ts)
            bad_pairs = polyline_self_intersections(curve, limit=64)
            bad_steps: list[Fraction] = []
            check_ts = set(params)
            check_ts.update(f_next.xs)
            for t0, t1 in zip(params, params[1:]):
                check_ts.add((t0 + t1) / 2)
            for t in sorted(check_ts):
                p = _curve_at_param(curve, params, t)
                q = _curve_at_param(prev.curve, prev.params, f_next(t))
                if p.dist_sq(q) >= eps_sq:
                    bad_steps.append(t)
                    if len(bad_steps) >= 64:
                        break
            if not bad_pairs and not bad_steps:
                done = True
                break
            intervals = []
            for i, j in bad_pairs:
                intervals.append((params[i], params[i + 1]))
                intervals.append((params[j], params[j + 1]))
            for t in bad_steps:
                k = bisect.bisect_right(params, t) - 1
                k = min(max(k, 0), len(params) - 2)
                intervals.append((params[k], params[k + 1]))
            new_ts: set[Fraction] = set()
            for ta, tb in intervals:
                cuts = [ta] + [s for s in sample if ta < s < tb] + [tb]
                for s0, s1 in zip(cuts, cuts[1:]):
                    y0, y1 = arc_at(s0).y, arc_at(s1).y
                    if y0 != y1:
                        ylo, yhi = (y0, y1) if y0 < y1 else (y1, y0)
                        lo_i = bisect.bisect_right(kink_levels, ylo)
                        hi_i = bisect.bisect_left(kink_levels, yhi)
                        for y_star in kink_levels[lo_i:hi_i]:
                            t_star = s0 + (y_star - y0) * (s1 - s0) / (y1 - y0)
                            if s0 < t_star < s1:
                                new_ts.add(t_star)
                    new_ts.add((s0 + s1) / 2)
                    new_ts.add(s0 + (s1 - s0) / 4)
                    new_ts.add(s0 + 3 * (s1 - s0) / 4)
            new_ts -= set(sample)
            if not new_ts:
                break
            sample = sorted(set(sample) | new_ts)
        if done:
            break
        scale_mult /= 2
    if not done:
        raise TubeTooNarrow("corridor image not embeddable at this tolerance")

    # marked images coincide with the previous stage's marked images
    marks = []
    for i, t in enumerate(params):
        if t in mark_params:
            marks.append((owners[mark_params[t] - 1], i))
    if len(marks) != len(Z_next.points):
        raise TubeTooNarrow("a marked image collapsed during sampling")

    # persisted whiskers must still terminate exactly at their marked images
    mark_point = {owner: curve.vertices[idx] for owner, idx in marks}
    for w in prev.whiskers:
        if w.owner in mark_point and w.probe.vertices[-1] != mark_point[w.owner]:
            raise TubeTooNarrow(
                f"marked image of point {w.owner} moved between stages"
            )

    h = min(_halfwidth_from_clearance(curve), prev.tube.halfwidth / 4)
    stage = None
    for _ in range(8):
        tube = build_tube(curve, params, h, side=prev.tube.side)
        if tube_quads_ok(tube):
            whiskers = list(prev.whiskers)
            existing = {w.owner for w in whiskers}
            for owner, vi in marks:
                if owner in existing:
                    continue
                whiskers.append(_fresh_whisker(prev, curve, params, owner, vi, eps_tuck))
            stage = EmbeddingStage(
                index=prev.index + 1,
                eps=eps_next,
                fmap=f_next,
                curve=curve,
                params=params,
                marks=tuple(sorted(marks)),
                tube=tube,
                whiskers=tuple(sorted(whiskers, key=lambda w: w.owner)),
                prev_curve=prev.curve,
                prev_params=prev.params,
            )
            certs = access_certificates(stage)
            if all(c.passed for c in certs):
                return stage
        h /= 2
    raise TubeTooNarrow("no tube width produced passing certificates")


def sorted_owner_indices(Z: MarkedSet) -> list[int]:
    # marked points are stored sorted; owners follow the same order here
    return list(range(1, len(Z.points) + 1))


def _fresh_whisker(prev, curve, params, owner, vi, eps_tuck) -> Whisker:
    """Probe for a newly scheduled point: a short horizontal approach from
    the free side (marked images always sit on the boundary x = 0)."""
    mark = curve.vertices[vi]
    start = Point(mark.x - eps_tuck, mark.y)
    return Whisker(owner, Polyline((start, mark)))


def _check_step_bound(prev: EmbeddingStage, f_next: PLMap, curve: Polyline,
                      params: tuple[Fraction, ...], eps_next: Fraction) -> None:
    """Exact squared-distance step bound at every vertex parameter, every
    breakpoint of the bonding map, and edge midpoints."""
    eps_sq = eps_next * eps_next
    sample = set(params)
    sample.update(x for x in f_next.xs)
    for t0, t1 in zip(params, params[1:]):
        sample.add((t0 + t1) / 2)
    for t in sorted(sample):
        p = _curve_at_param(curve, params, t)
        q = _curve_at_param(prev.curve, prev.params, f_next(t))
        if p.dist_sq(q) >= eps_sq:
            raise TubeTooNarrow(
                f"step bound fails at parameter {t}: d^2 = {p.dist_sq(q)} >= {eps_sq}"
            )


# --------------------------------------------------------------------------
# Pipeline driver
# --------------------------------------------------------------------------


def run_pipeline(
    f: PLMap,
    schedule: Sequence[Fraction],
    depth: int,
    eps1,
) -> list[EmbeddingStage]:
    """Self-map pipeline: the scheduled points are fixed points of f, stage i
    carries whiskers for the first min(i, len(schedule)) of them, and
    eps_i = eps_1 / 2^(i-1)."""
    eps1 = Fraction(eps1)
    if depth < 1:
        raise ValueError("depth must be >= 1")
    pts = [Fraction(p) for p in schedule]
    for p in pts:
        if f(p) != p:
            raise PreconditionViolated("scheduled points must be fixed under the map")

    def sorted_with_owners(k: int):
        sub = pts[:k]
        order = sorted(range(len(sub)), key=lambda t: sub[t])
        return marked([sub[t] for t in order]), [t + 1 for t in order]

    stages: list[EmbeddingStage] = []
    z1, owners1 = sorted_with_owners(1)
    stages.append(init_stage(f, z1, eps1, owners1))
    for i in range(2, depth + 1):
        zi, owners = sorted_with_owners(min(i, len(pts)))
        eps_i = eps1 / 2 ** (i - 1)
        stages.append(refine_stage(stages[-1], f, zi, eps_i, owners))
    return stages


# --------------------------------------------------------------------------
# Export / verification
# --------------------------------------------------------------------------


def export_stage(stage: EmbeddingStage, fmt: str, *, svg_scale: int = 640) -> str:
    if fmt == "json":
        from . import jsonio
        return jsonio.dumps(stage_to_json(stage))
    if fmt == "svg":
        from .svg import render_stage
        return render_stage(stage, scale=svg_scale)
    raise ValueError(f"unknown format {fmt!r}")


STAGE_SCHEMA = "embedding-stage/1"


def stage_to_json(stage: EmbeddingStage) -> dict:
    from . import jsonio
    from .plmap import to_json_dict

    doc = {
        "schema": STAGE_SCHEMA,
        "index": stage.index,
        "eps": jsonio.format_rational(stage.eps),
        "map": to_json_dict(stage.fmap),
        "curve": [jsonio.point_to_json(p) for p in stage.curve.vertices],
        "params": [jsonio.format_rational(t) for t in stage.params],
        "marks": [[owner, idx] for owner, idx in stage.marks],
        "tube": {
            "halfwidth": jsonio.format_rational(stage.tube.halfwidth),
            "side": stage.tube.side,
            "quads": [
                [jsonio.point_to_json(p) for p in q] for q in stage.tube.quads
            ],
        },
        "whiskers": [
            {
                "owner": w.owner,
                "probe": [jsonio.point_to_json(p) for p in w.probe.vertices],
            }
            for w in stage.whiskers
        ],
    }
    if stage.prev_curve is not None:
        doc["prev_curve"] = [jsonio.point_to_json(p) for p in stage.prev_curve.vertices]
        doc["prev_params"] = [jsonio.format_rational(t) for t in stage.prev_params]
    return doc


def stage_from_json(doc: dict) -> EmbeddingStage:
    from . import jsonio
    from .plmap import from_json_dict

    if doc.get("schema") != STAGE_SCHEMA:
        raise ValueError("not an embedding-stage document")
    curve = Polyline(tuple(jsonio.point_from_json(p) for p in doc["curve"]))
    params = tuple(jsonio.parse_rational(t) for t in doc["params"])
    tube = Tube(
        spine=curve,
        params=params,
        halfwidth=jsonio.parse_rational(doc["tube"]["halfwidth"]),
        side=int(doc["tube"]["side"]),
        quads=tuple(
            tuple(jsonio.point_from_json(p) for p in q) for q in doc["tube"]["quads"]
        ),
    )
    whiskers = tuple(
        Whisker(
            int(w["owner"]),
            Polyline(tuple(jsonio.point_from_json(p) for p in w["probe"])),
        )
        for w in doc["whiskers"]
    )
    prev_curve = None
    prev_params = None
    if "prev_curve" in doc:
        prev_curve = Polyline(tuple(jsonio.point_from_json(p) for p in doc["prev_curve"]))
        prev_params = tuple(jsonio.parse_rational(t) for t in doc["prev_params"])
    return EmbeddingStage(
        index=int(doc["index"]),
        eps=jsonio.parse_rational(doc["eps"]),
        fmap=from_json_dict(doc["map"]),
        curve=curve,
        params=params,
        marks=tuple((int(o), int(i)) for o, i in doc["marks"]),
        tube=tube,
        whiskers=whiskers,
        prev_curve=prev_curve,
        prev_params=prev_params,
    )


@dataclass(frozen=True)
class StageReport:
    ok: bool
    failures: tuple[str, ...]


def verify_stage(stage: EmbeddingStage) -> StageReport:
    """Re-run every single-stage invariant from the stored data alone."""
    failures: list[str] = []
    if any(t1 <= t0 for t0, t1 in zip(stage.params, stage.params[1:])):
        failures.append("parameters not strictly increasing")
    if not polyline_simple(stage.curve):
        failures.append("stage curve self-intersects")
    try:
        rebuilt = build_tube(stage.curve, stage.params, stage.tube.halfwidth,
                             stage.tube.side)
        if rebuilt.quads != stage.tube.quads:
            failures.append("tube quads do not match the spine and halfwidth")
    except TubeTooNarrow as e:
        failures.append(f"tube rebuild failed: {e}")
    if not tube_quads_ok(stage.tube):
        failures.append("tube quads overlap")
    for owner, idx in stage.marks:
        if not (0 <= idx < len(stage.curve.vertices)):
            failures.append(f"mark {owner} points outside the curve")
    for cert in access_certificates(stage):
        if not cert.passed:
            failures.append(
                f"certificate for point {cert.owner} fails: {'; '.join(cert.witnesses)}"
            )
    if stage.prev_curve is not None and stage.prev_params is not None:
        prev_stub = EmbeddingStage(
            index=stage.index - 1,
            eps=stage.eps * 2,
            fmap=stage.fmap,
            curve=stage.prev_curve,
            params=stage.prev_params,
            marks=(),
            tube=stage.tube,
            whiskers=(),
        )
        try:
            _check_step_bound(prev_stub, stage.fmap, stage.curve, stage.params, stage.eps)
        except TubeTooNarrow as e:
            failures.append(str(e))
    return StageReport(not failures, tuple(failures))
