"""Constructive embedding of a marked interval map into the right half-plane.

Given f, marked points Z (all visors removable) and a tolerance eps, this
module builds an injective polyline Phi in {x >= 0} such that

  (1) every point of Phi stays within eps of (0, f(t)) at its parameter t;
  (2) Phi touches the boundary exactly at the marked images (0, f(z_j));
  (3) between consecutive marked images, the rest of the arc stays out of the
      region bounded by the sub-arc and the boundary segment.

The construction draws the graph of a tie-breaking perturbation f' of f at a
strictly increasing depth coordinate, excurses each removable-visor interval
horizontally into a slot reserved at its target's position, and pinches the
marked points onto the boundary.  The perturbation is

    f'(x) = f(x) + eta * (x - xi(f(x)))

where xi interpolates marked levels to marked positions; at equal f-levels it
strictly orders values by position, which is exactly the strictness the slot
geometry needs, and the correction term is controlled by eta * Lip(xi) < 1.

`verify_half_plane_arc` re-checks all three conclusions and injectivity from
scratch with exact arithmetic; `build_half_plane_arc` never returns an arc
that has not passed it.
"""

from __future__ import annotations

import bisect
from dataclasses import dataclass
from fractions import Fraction
from typing import Optional

from .geom import Point, Polyline, point_vs_closed_curve, polyline_simple
from .geom import Location, ring_segments, ring_simple, seg_intersection, Segment
from .plmap import PLMap, level_crossings, range_max
from .visors import (
    MarkedSet,
    NonRemovableVisor,
    VisorFamily,
    all_visors_removable,
    assign_targets,
    check_order_hypothesis,
    choose_visor_family,
)


class InfeasiblePerturbation(ValueError):
    pass


class ConstructionFailed(RuntimeError):
    pass


Pair = tuple[Fraction, Fraction]


# --------------------------------------------------------------------------
# Raw PL height functions (values may leave [0,1]; PLMap is reserved for unit
# range maps, but the perturbed heights only need to stay eps-close to f).
# --------------------------------------------------------------------------


class RawPL:
    def __init__(self, points: tuple[Pair, ...]):
        self.points = points
        self.xs = [x for x, _ in points]

    def value(self, x: Fraction) -> Fraction:
        i = bisect.bisect_right(self.xs, x) - 1
        if i >= len(self.xs) - 1:
            i = len(self.xs) - 2
        if i < 0:
            i = 0
        x0, y0 = self.points[i]
        x1, y1 = self.points[i + 1]
        return y0 + (y1 - y0) * (x - x0) / (x1 - x0)

    def slope_left(self, x: Fraction) -> Optional[Fraction]:
        if x <= self.xs[0]:
            return None
        i = bisect.bisect_left(self.xs, x) - 1
        if i < 0:
            i = 0
        x0, y0 = self.points[i]
        x1, y1 = self.points[i + 1]
        return (y1 - y0) / (x1 - x0)

    def slope_right(self, x: Fraction) -> Optional[Fraction]:
        if x >= self.xs[-1]:
            return None
        i = bisect.bisect_right(self.xs, x) - 1
        if i >= len(self.xs) - 1:
            i = len(self.xs) - 2
        x0, y0 = self.points[i]
        x1, y1 = self.points[i + 1]
        return (y1 - y0) / (x1 - x0)

    def interior_break_xs(self, lo: Fraction, hi: Fraction) -> list[Fraction]:
        return [x for x in self.xs if lo < x < hi]


def _raw_canonical(points: list[Pair]) -> tuple[Pair, ...]:
    points.sort(key=lambda p: p[0])
    out: list[Pair] = []
    for p in points:
        if out and p[0] == out[-1][0]:
            if p[1] != out[-1][1]:
                raise AssertionError("conflicting raw values")
            continue
        out.append(p)
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


def _pl_strictly_below(
    raw: RawPL,
    tau: Fraction,
    lo: Fraction,
    hi: Fraction,
    incl_lo: bool,
    incl_hi: bool,
) -> bool:
    """Pointwise f' < tau on the interval with the given endpoint inclusion."""
    if lo == hi:
        return (not (incl_lo and incl_hi)) or raw.value(lo) < tau
    cut = [lo] + raw.interior_break_xs(lo, hi) + [hi]
    for u, w in zip(cut, cut[1:]):
        vu, vw = raw.value(u), raw.value(w)
        top = max(vu, vw)
        if not (top < tau or (top == tau and vu != vw)):
            return False
        if (u > lo or incl_lo) and vu >= tau:
            return False
        if (w < hi or incl_hi) and vw >= tau:
            return False
    return True


def _pl_strictly_above(
    raw: RawPL,
    tau: Fraction,
    lo: Fraction,
    hi: Fraction,
    incl_lo: bool,
    incl_hi: bool,
) -> bool:
    if lo == hi:
        return (not (incl_lo and incl_hi)) or raw.value(lo) > tau
    cut = [lo] + raw.interior_break_xs(lo, hi) + [hi]
    for u, w in zip(cut, cut[1:]):
        vu, vw = raw.value(u), raw.value(w)
        bot = min(vu, vw)
        if not (bot > tau or (bot == tau and vu != vw)):
            return False
        if (u > lo or incl_lo) and vu <= tau:
            return False
        if (w < hi or incl_hi) and vw <= tau:
            return False
    return True


# --------------------------------------------------------------------------
# Perturbation
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class PerturbedMap:
    points: tuple[Pair, ...]
    delta: Fraction

    def raw(self) -> RawPL:
        return RawPL(self.points)


def _xi_nodes(f: PLMap, Z: MarkedSet) -> list[Pair]:
    nodes: dict[Fraction, Fraction] = {}
    for z in Z.points:
        nodes[f(z)] = z
    nodes.setdefault(Fraction(0), Fraction(0))
    nodes.setdefault(Fraction(1), Fraction(1))
    return sorted(nodes.items())


def _xi_value(nodes: list[Pair], level: Fraction) -> Fraction:
    if level <= nodes[0][0]:
        return nodes[0][1]
    if level >= nodes[-1][0]:
        return nodes[-1][1]
    for (l0, p0), (l1, p1) in zip(nodes, nodes[1:]):
        if l0 <= level <= l1:
            return p0 + (p1 - p0) * (level - l0) / (l1 - l0)
    raise AssertionError("unreachable")


def _xi_lipschitz(nodes: list[Pair]) -> Fraction:
    best = Fraction(0)
    for (l0, p0), (l1, p1) in zip(nodes, nodes[1:]):
        if l1 > l0:
            best = max(best, abs(p1 - p0) / (l1 - l0))
    return best


def _build_perturbed_points(f: PLMap, Z: MarkedSet, eta: Fraction) -> tuple[Pair, ...]:
    nodes = _xi_nodes(f, Z)
    xs: set[Fraction] = set(f.xs)
    for level, _ in nodes:
        xs.update(level_crossings(f, level, 0, 1))
    pts = [(x, f(x) + eta * (x - _xi_value(nodes, f(x)))) for x in sorted(xs)]
    return _raw_canonical(pts)


def check_perturbation(
    points: tuple[Pair, ...],
    f: PLMap,
    Z: MarkedSet,
    family: VisorFamily,
    eps: Fraction,
) -> list[str]:
    """Exact per-piece verification of the four perturbation properties.
    Returns the list of violated clauses (empty means all hold)."""
    raw = RawPL(points)
    bad: list[str] = []
    # (1) closeness: ||(eps/2, f'(x)) - (0, f(x))|| < eps for all x
    diff_xs = sorted(set(raw.xs) | set(f.xs))
    bound = 3 * eps * eps / 4
    for x in diff_xs:
        d = raw.value(x) - f(x)
        if d * d >= bound:
            bad.append(f"closeness at x={x}")
            break
    # (3) fixed marked values
    for z in Z.points:
        if raw.value(z) != f(z):
            bad.append(f"marked value moved at z={z}")
    zero_unmarked = 0 not in Z
    # (2) per-member strictness
    for m in family.members:
        a, b = m.interval.a, m.interval.b
        c = m.target
        if c is None:
            raise ValueError("family must carry targets")
        if not (a == 0 and zero_unmarked):
            if not _pl_strictly_above(raw, raw.value(a), a, b, False, True):
                bad.append(f"entry floor fails on ({a},{b}]")
        if not _pl_strictly_above(raw, raw.value(b), b, c, False, True):
            bad.append(f"exit floor fails on ({b},{c}]")
        if c != 1 or f(1) >= range_max(f, a, b):
            if not _pl_strictly_below(raw, raw.value(c), a, b, True, True):
                bad.append(f"target ceiling fails on [{a},{b}]")
    # (4) everything left of a mark and outside the excursion intervals stays
    # strictly below the mark's level
    humps = [(m.interval.a, m.interval.b) for m in family.members]
    prev = Fraction(0)
    for j, z in enumerate(Z.points, start=1):
        tau = f(z)
        cur = prev
        incl = True
        for ha, hb in humps:
            if hb <= cur or ha >= z:
                continue
            if ha > cur or (ha == cur and incl):
                if not _pl_strictly_below(raw, tau, cur, min(ha, z), incl, True):
                    bad.append(f"sublevel fails on [{cur},{min(ha, z)}) before z_{j}")
            cur = max(cur, min(hb, z))
            incl = True
        if cur < z:
            if not _pl_strictly_below(raw, tau, cur, z, incl, False):
                bad.append(f"sublevel fails on [{cur},{z}) before z_{j}")
        elif cur == z and incl and z in {hb for _, hb in humps}:
            pass  # region up to z fully covered by an excursion ending at z
        prev = z
    return bad


def perturb_map(f: PLMap, Z: MarkedSet, family: VisorFamily, eps) -> PerturbedMap:
    """A PL height function f' with the Step-2 strictness properties.

    Tries the unperturbed map first (the properties may already hold), then a
    geometric sequence of tie-breaking magnitudes.  Raises
    InfeasiblePerturbation when eps is not positive or no magnitude works.
    """
    eps = Fraction(eps)
    if eps <= 0:
        raise InfeasiblePerturbation("eps must be positive")
    check_order_hypothesis(f, Z)
    base = tuple((x, y) for x, y in f.breakpoints)
    if not check_perturbation(base, f, Z, family, eps):
        return PerturbedMap(base, Fraction(0))
    nodes = _xi_nodes(f, Z)
    lip = _xi_lipschitz(nodes)
    eta0 = eps / 4
    if lip > 0:
        eta0 = min(eta0, Fraction(1, 2) / lip)
    for attempt in range(12):
        eta = eta0 / (2**attempt)
        pts = _build_perturbed_points(f, Z, eta)
        if not check_perturbation(pts, f, Z, family, eps):
            return PerturbedMap(pts, eta)
    raise InfeasiblePerturbation(
        "no tie-breaking magnitude satisfied the strictness properties"
    )


# --------------------------------------------------------------------------
# The arc object
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class HalfPlaneArc:
    path: Polyline
    params: tuple[Fraction, ...]
    marks: tuple[tuple[int, int], ...]  # (marked index j, vertex index)
    orientation: str = "free-side-left"

    def __post_init__(self):
        if len(self.params) != len(self.path.vertices):
            raise ValueError("one parameter per vertex required")

    def mark_vertex(self, j: int) -> Point:
        for jj, idx in self.marks:
            if jj == j:
                return self.path.vertices[idx]
        raise KeyError(j)


@dataclass(frozen=True)
class TuckFailure:
    conclusion: str
    detail: str


@dataclass(frozen=True)
class TuckReport:
    injective: bool
    closeness_ok: bool
    marks_ok: bool
    loops_ok: bool
    failures: tuple[TuckFailure, ...]

    @property
    def ok(self) -> bool:
        return self.injective and self.closeness_ok and self.marks_ok and self.loops_ok


# --------------------------------------------------------------------------
# Layout
# --------------------------------------------------------------------------


class _LayoutInfeasible(Exception):
    pass


@dataclass
class _Hump:
    v: Fraction
    a: Fraction
    b: Fraction
    c: Fraction
    slot_lo: Fraction = Fraction(0)
    slot_hi: Fraction = Fraction(0)

    @property
    def b_prime(self) -> Fraction:
        return self.slot_lo

    @property
    def a_prime(self) -> Fraction:
        return self.slot_hi


class _Layout:
    """Depth bookkeeping: plateau gaps inserted into the unit domain, mapped
    affinely onto [margin, eps/2]."""

    def __init__(self, plateau_values: list[Fraction], eps: Fraction):
        self.gap = Fraction(1)
        self.U = sorted(plateau_values)
        self.W = eps / 2
        self.m0 = self.W / 8
        self.T = 1 + self.gap * len(self.U)

    def _depth(self, layout_pos: Fraction) -> Fraction:
        return self.m0 + layout_pos * (self.W - self.m0) / self.T

    def dpt(self, x: Fraction) -> Fraction:
        k = bisect.bisect_left(self.U, x)
        return self._depth(x + self.gap * k)

    def p1(self, u: Fraction) -> Fraction:
        return self.dpt(u)

    def p2(self, u: Fraction) -> Fraction:
        k = bisect.bisect_left(self.U, u)
        return self._depth(u + self.gap * (k + 1))


def _build_construction(
    f: PLMap,
    Z: MarkedSet,
    family: VisorFamily,
    eps: Fraction,
    scale: Fraction,
) -> HalfPlaneArc:
    pm = perturb_map(f, Z, family, eps * scale)
    raw = pm.raw()
    zs = list(Z.points)
    zset = set(zs)

    humps = [
        _Hump(m.v, m.interval.a, m.interval.b, m.target) for m in family.members
    ]
    humps.sort(key=lambda h: h.a)
    hump_by_a = {h.a: h for h in humps}
    hump_as = {h.a for h in humps}
    hump_bs = {h.b for h in humps}

    # plateau values: plain entry/exit landings, interior target plateaus,
    # and a terminal gap when some target is 1
    plateau: set[Fraction] = set()
    for h in humps:
        a_plain = h.a not in zset and not (h.a == 0 and 0 not in zset) and h.a not in hump_bs
        if a_plain:
            plateau.add(h.a)
        b_plain = h.b not in zset and h.b not in hump_as and h.b != 1
        if b_plain:
            plateau.add(h.b)
    targets = sorted({h.c for h in humps})
    for c in targets:
        if c == 1 or c in zset:
            continue
        if c in hump_as or c in hump_bs:
            raise _LayoutInfeasible("target collides with an excursion endpoint")
        plateau.add(c)
    if any(c == 1 for c in targets):
        plateau.add(Fraction(1))

    lay = _Layout(sorted(plateau), eps)

    # structural domain points (used for gap computations around marks)
    structural = set(raw.xs) | zset | hump_as | hump_bs | {Fraction(0), Fraction(1)}
    structural |= set(targets)
    struct_sorted = sorted(structural)

    def prev_struct(x: Fraction) -> Fraction:
        i = bisect.bisect_left(struct_sorted, x) - 1
        return struct_sorted[i] if i >= 0 else Fraction(0)

    def next_struct(x: Fraction) -> Fraction:
        i = bisect.bisect_right(struct_sorted, x)
        return struct_sorted[i] if i < len(struct_sorted) else Fraction(1)

    all_heights = sorted(
        {raw.value(x) for x in structural} | {f(z) for z in zs}
    )

    def earlier_ceiling(z: Fraction) -> Optional[Fraction]:
        vals = []
        for x in structural:
            if x >= z:
                continue
            inside_later = any(
                h.a < x < h.b and h.c >= z for h in humps
            )
            if inside_later:
                continue
            vals.append(raw.value(x))
        return max(vals) if vals else None

    def mark_slot_top(z: Fraction) -> Optional[Fraction]:
        tops = []
        for h in humps:
            if h.c == z:
                tops.append(
                    max(
                        raw.value(x)
                        for x in [h.a, h.b] + raw.interior_break_xs(h.a, h.b)
                    )
                )
        return max(tops) if tops else None

    # per-mark pinch parameters
    level_list = sorted({f(z) for z in zs})
    min_level_gap = None
    for l0, l1 in zip(level_list, level_list[1:]):
        g = l1 - l0
        min_level_gap = g if min_level_gap is None else min(min_level_gap, g)

    max_slope = max(
        abs((y1 - y0) / (x1 - x0)) for x0, x1, y0, y1 in f.pieces()
    )
    param_budget = eps * scale / (8 * (max_slope + 1))

    h_in: dict[Fraction, Fraction] = {}
    h_out: dict[Fraction, Fraction] = {}

    for z in zs:
        lvl = f(z)
        ceil_below = earlier_ceiling(z)
        above = [q for q in all_heights if q > lvl]
        band = eps * scale / 8
        if ceil_below is not None:
            if ceil_below >= lvl:
                raise _LayoutInfeasible("earlier height reaches the mark level")
            band = min(band, (lvl - ceil_below) / 4)
        if above:
            band = min(band, (above[0] - lvl) / 4)
        if min_level_gap is not None:
            band = min(band, min_level_gap / 4)
        top = mark_slot_top(z)
        if top is not None:
            if top >= lvl:
                raise _LayoutInfeasible("slot hump reaches its mark level")
            band = min(band, (lvl - top) / 4)

        needs_in = z != 0 and z not in hump_bs
        needs_out = z != 1 and z not in hump_as
        if needs_in:
            sl = raw.slope_left(z)
            if sl is None or sl <= 0:
                raise _LayoutInfeasible("height not increasing into a mark")
            hi_gap = (z - prev_struct(z)) / 2
            h = min(hi_gap, param_budget, band / sl)
            if h <= 0:
                raise _LayoutInfeasible("no room left of a mark")
            h_in[z] = h
        if needs_out:
            sr = raw.slope_right(z)
            if sr is None or sr == 0:
                raise _LayoutInfeasible("flat height right of a mark")
            hо_gap = (next_struct(z) - z) / 2
            h = min(hо_gap, param_budget, band / abs(sr))
            if h <= 0:
                raise _LayoutInfeasible("no room right of a mark")
            if sr < 0 and needs_in:
                # keep the outgoing pinch edge above the incoming graph edge
                cap = (raw.slope_left(z) * h_in[z]) * lay.m0 / (2 * lay.W * abs(sr))
                h = min(h, cap)
            if h <= 0:
                raise _LayoutInfeasible("no room right of a mark")
            h_out[z] = h

    # slot regions per target value
    def slot_region(c: Fraction) -> tuple[Fraction, Fraction]:
        if c == 1:
            return (lay.p1(Fraction(1)), lay.p2(Fraction(1)))
        if c not in zset:
            return (lay.p1(c), lay.p2(c))
        d0 = lay.dpt(c)
        if c in h_out:
            d1 = lay.dpt(c + h_out[c])
        else:
            nxt = next_struct(c)
            d1 = lay.dpt(nxt)
        return (d0, d0 + (d1 - d0) / 2)

    for c in targets:
        members = sorted([h for h in humps if h.c == c], key=lambda h: -h.v)
        lo, hi = slot_region(c)
        k = len(members)
        delta = (hi - lo) / (2 * k + 1)
        if delta <= 0:
            raise _LayoutInfeasible("degenerate slot region")
        for t, h in enumerate(members):
            h.slot_lo = lo + (2 * t + 1) * delta
            h.slot_hi = lo + (2 * t + 2) * delta

    # ---------------- vertex emission ----------------
    verts: list[Point] = []
    params: list[Fraction] = []
    marks: list[tuple[int, int]] = []
    mark_index = {z: j for j, z in enumerate(zs, start=1)}

    def emit(x_depth: Fraction, y: Fraction, t: Fraction, mark_of: Optional[Fraction] = None):
        if params and t <= params[-1]:
            raise _LayoutInfeasible(f"parameters not increasing at t={t}")
        p = Point(x_depth, y)
        if verts and verts[-1] == p:
            raise _LayoutInfeasible(f"repeated vertex at t={t}")
        verts.append(p)
        params.append(t)
        if mark_of is not None:
            marks.append((mark_index[mark_of], len(verts) - 1))

    def emit_graph(lo: Fraction, hi: Fraction, incl_lo: bool, incl_hi: bool):
        pts = []
        if incl_lo:
            pts.append(lo)
        pts.extend(raw.interior_break_xs(lo, hi))
        if incl_hi:
            pts.append(hi)
        for x in pts:
            emit(lay.dpt(x), raw.value(x), x)

    # stops: (x, kind, payload); kinds: hump, mark, cplateau, end
    stops: list[tuple[Fraction, str, object]] = []
    for h in humps:
        stops.append((h.a, "hump", h))
    for z in zs:
        if z not in hump_as and z not in hump_bs:
            stops.append((z, "mark", z))
    for c in targets:
        if c not in zset and c != 1 and not any(h.a <= c <= h.b for h in humps):
            stops.append((c, "cplateau", c))
    stops.sort(key=lambda s: s[0])

    end_depth = lay.p1(Fraction(1)) if Fraction(1) in lay.U else lay.dpt(Fraction(1))

    def theta_before(x: Fraction) -> Fraction:
        last = params[-1] if params else Fraction(-1)
        room = x - last
        if room <= 0:
            raise _LayoutInfeasible("no parameter room before a transition")
        return min(room / 4, param_budget)

    def theta_after(x: Fraction) -> Fraction:
        nxt_candidates = [s for s, _, _ in stops if s > x]
        nxt_bp = [b for b in raw.xs if b > x]
        nxt = min(nxt_candidates + nxt_bp + [Fraction(1)])
        room = nxt - x
        if room <= 0:
            raise _LayoutInfeasible("no parameter room after a transition")
        return min(room / 4, param_budget)

    cursor = Fraction(0)
    cursor_emitted = False
    i_stop = 0

    def do_mark_out(z: Fraction):
        nonlocal cursor, cursor_emitted
        if z == 1:
            cursor = Fraction(1)
            cursor_emitted = True
            return  # arc ends at the apex
        ho = h_out[z]
        emit(lay.dpt(z + ho), raw.value(z + ho), z + ho)
        cursor = z + ho
        cursor_emitted = True

    def _merge_dip(z: Fraction) -> Fraction:
        lvl = f(z)
        floor_candidates = []
        ceil_b = earlier_ceiling(z)
        if ceil_b is not None:
            floor_candidates.append(lvl - ceil_b)
        top = mark_slot_top(z)
        if top is not None:
            floor_candidates.append(lvl - top)
        floor_candidates.append(eps * scale / 8)
        gamma = min(floor_candidates) / 2
        if gamma <= 0:
            raise _LayoutInfeasible("no room to dip under a merged mark")
        return gamma

    def do_hump_chain(first: _Hump):
        nonlocal cursor, cursor_emitted
        h = first
        # --- entry of the chain ---
        if h.a == 0 and 0 not in zset:
            emit(h.a_prime, raw.value(Fraction(0)), Fraction(0))
        elif h.a in zset:
            if h.a == 0:
                emit(Fraction(0), f(Fraction(0)), Fraction(0), mark_of=h.a)
            else:
                hi_ = h_in[h.a]
                emit_graph(cursor, h.a - hi_, not cursor_emitted, True)
                emit(Fraction(0), f(h.a), h.a, mark_of=h.a)
            th = theta_after(h.a)
            emit(h.a_prime, f(h.a), h.a + th)
        else:
            emit_graph(cursor, h.a, not cursor_emitted, True)
            th = theta_after(h.a)
            emit(h.a_prime, raw.value(h.a), h.a + th)
        while True:
            # --- interior (depth runs right-to-left across the slot) ---
            span = h.a_prime - h.b_prime
            for x in raw.interior_break_xs(h.a, h.b):
                rho = h.a_prime - (x - h.a) * span / (h.b - h.a)
                emit(rho, raw.value(x), x)
            # --- exit / merge with the next excursion ---
            thb = theta_before(h.b)
            nxt = hump_by_a.get(h.b)
            if h.b in zset:
                emit(h.b_prime, f(h.b), h.b - thb)
                if nxt is not None:
                    # merge through the marked point: dip under the level,
                    # touch the boundary, then run out to the next slot
                    gamma = _merge_dip(h.b)
                    emit(lay.m0 / 2, f(h.b) - gamma, h.b - thb / 2)
                    emit(Fraction(0), f(h.b), h.b, mark_of=h.b)
                    th = theta_after(h.b)
                    emit(nxt.a_prime, f(h.b), h.b + th)
                    h = nxt
                    continue
                emit(Fraction(0), f(h.b), h.b, mark_of=h.b)
                do_mark_out(h.b)
                return
            if nxt is not None:
                emit(h.b_prime, raw.value(h.b), h.b - thb)
                th = theta_after(h.b)
                emit(nxt.a_prime, raw.value(h.b), h.b + th)
                h = nxt
                continue
            emit(h.b_prime, raw.value(h.b), h.b - thb)
            emit(lay.p2(h.b), raw.value(h.b), h.b)
            cursor = h.b
            cursor_emitted = True
            return

    while i_stop < len(stops):
        x, kind, payload = stops[i_stop]
        i_stop += 1
        if kind == "hump":
            h = payload
            if h.a in hump_bs:
                continue  # mid-chain: consumed by the previous hump's exit
            do_hump_chain(h)
        elif kind == "mark":
            z = payload
            if z == 0:
                emit(Fraction(0), f(Fraction(0)), Fraction(0), mark_of=z)
                do_mark_out(z)
            elif z == 1:
                hi_ = h_in[z]
                emit_graph(cursor, 1 - hi_, not cursor_emitted, True)
                emit(Fraction(0), f(Fraction(1)), Fraction(1), mark_of=z)
                cursor = Fraction(1)
                cursor_emitted = True
            else:
                hi_ = h_in[z]
                emit_graph(cursor, z - hi_, not cursor_emitted, True)
                emit(Fraction(0), f(z), z, mark_of=z)
                do_mark_out(z)
        else:  # cplateau
            c = payload
            emit_graph(cursor, c, not cursor_emitted, True)
            th = theta_after(c)
            emit(lay.p2(c), raw.value(c), c + th)
            cursor = c
            cursor_emitted = True

    if cursor < 1:
        emit_graph(cursor, Fraction(1), not cursor_emitted, False)
        emit(end_depth, raw.value(Fraction(1)), Fraction(1))
    elif not params or params[-1] != 1:
        raise _LayoutInfeasible("arc does not end at parameter 1")

    if params[0] != 0:
        raise _LayoutInfeasible("arc does not start at parameter 0")

    return HalfPlaneArc(Polyline(tuple(verts)), tuple(params), tuple(marks))


def build_half_plane_arc(f: PLMap, Z: MarkedSet, eps) -> HalfPlaneArc:
    """Build the boundary-touching embedding and verify it before returning.

    Raises NonRemovableVisor when some visor admits no removing triple, and
    ConstructionFailed when no tie-breaking scale produces a verified arc.
    """
    eps = Fraction(eps)
    if eps <= 0:
        raise ValueError("eps must be positive")
    check_order_hypothesis(f, Z)
    rep = all_visors_removable(f, Z)
    if not rep.all_removable:
        raise NonRemovableVisor(f"non-removable visor cells: {rep.failing}")
    family = assign_targets(f, Z, choose_visor_family(f, Z))
    last = None
    for attempt in range(8):
        scale = Fraction(1, 2**attempt)
        try:
            arc = _build_construction(f, Z, family, eps, scale)
        except (_LayoutInfeasible, InfeasiblePerturbation) as e:
            last = str(e)
            continue
        report = verify_half_plane_arc(f, Z, eps, arc)
        if report.ok:
            return arc
        last = "; ".join(fl.detail for fl in report.failures[:3])
    raise ConstructionFailed(f"no verified arc after retries: {last}")


# --------------------------------------------------------------------------
# Independent verifier
# --------------------------------------------------------------------------


def verify_half_plane_arc(f: PLMap, Z: MarkedSet, eps, arc: HalfPlaneArc) -> TuckReport:
    """Exact re-check of injectivity and the three conclusions.

    Closeness is checked at every vertex and at every parameter breakpoint of
    f inside each edge; since the squared distance between two affine paths is
    convex in the parameter, those checks bound the whole edge.
    """
    eps = Fraction(eps)
    failures: list[TuckFailure] = []
    path = arc.path
    params = arc.params
    n_v = len(path.vertices)

    injective = True
    if any(t1 <= t0 for t0, t1 in zip(params, params[1:])):
        injective = False
        failures.append(TuckFailure("structure", "parameters not strictly increasing"))
    if params[0] != 0 or params[-1] != 1:
        injective = False
        failures.append(TuckFailure("structure", "parameters must run from 0 to 1"))
    if injective and not polyline_simple(path):
        injective = False
        failures.append(TuckFailure("injectivity", "polyline self-intersects"))

    eps_sq = eps * eps
    closeness_ok = True
    for i in range(n_v):
        p = path.vertices[i]
        t = params[i]
        d = p.x * p.x + (p.y - f(t)) ** 2
        if d >= eps_sq:
            closeness_ok = False
            failures.append(
                TuckFailure("conclusion-1", f"vertex {i} at parameter {t} is {d} >= eps^2 away")
            )
            break
    if closeness_ok:
        fxs = f.xs
        for i in range(n_v - 1):
            t0, t1 = params[i], params[i + 1]
            lo = bisect.bisect_right(fxs, t0)
            hi = bisect.bisect_left(fxs, t1)
            for k in range(lo, hi):
                u = fxs[k]
                lam = (u - t0) / (t1 - t0)
                p0, p1 = path.vertices[i], path.vertices[i + 1]
                px = p0.x + lam * (p1.x - p0.x)
                py = p0.y + lam * (p1.y - p0.y)
                d = px * px + (py - f(u)) ** 2
                if d >= eps_sq:
                    closeness_ok = False
                    failures.append(
                        TuckFailure(
                            "conclusion-1",
                            f"edge {i} at parameter {u} is {d} >= eps^2 away",
                        )
                    )
                    break
            if not closeness_ok:
                break

    marks_ok = True
    mark_map = dict(arc.marks)
    if sorted(mark_map) != list(range(1, len(Z.points) + 1)):
        marks_ok = False
        failures.append(TuckFailure("conclusion-2", "mark labels are not 1..n"))
    else:
        for j, z in enumerate(Z.points, start=1):
            idx = mark_map[j]
            p = path.vertices[idx]
            if p != Point(Fraction(0), f(z)) or params[idx] != z:
                marks_ok = False
                failures.append(TuckFailure("conclusion-2", f"mark {j} misplaced"))
        mark_idxs = set(mark_map.values())
        for i, p in enumerate(path.vertices):
            if p.x < 0:
                marks_ok = False
                failures.append(TuckFailure("conclusion-2", f"vertex {i} left of the boundary"))
                break
            if p.x == 0 and i not in mark_idxs:
                marks_ok = False
                failures.append(TuckFailure("conclusion-2", f"non-mark vertex {i} on the boundary"))
                break
        for i in range(n_v - 1):
            if path.vertices[i].x == 0 and path.vertices[i + 1].x == 0:
                marks_ok = False
                failures.append(TuckFailure("conclusion-2", "edge lies on the boundary"))
                break

    loops_ok = True
    if marks_ok and injective:
        for j in range(1, len(Z.points)):
            i1 = mark_map[j]
            i2 = mark_map[j + 1]
            ring_vertices = path.vertices[i1 : i2 + 1]
            ring = Polyline(tuple(ring_vertices))
            if not ring_simple(ring):
                loops_ok = False
                failures.append(
                    TuckFailure("conclusion-3", f"loop {j} is not a simple closed curve")
                )
                continue
            loop_segs = ring_segments(ring)
            apex1 = path.vertices[i1]
            apex2 = path.vertices[i2]
            rest_segments = [
                (k, Segment(path.vertices[k], path.vertices[k + 1]))
                for k in range(n_v - 1)
                if not (i1 <= k < i2)
            ]
            bad = False
            for k, seg in rest_segments:
                for ls in loop_segs:
                    inter = seg_intersection(seg, ls)
                    if inter is None:
                        continue
                    if isinstance(inter, Point) and inter in (apex1, apex2):
                        if inter in (seg.a, seg.b):
                            continue
                    loops_ok = False
                    bad = True
                    failures.append(
                        TuckFailure(
                            "conclusion-3",
                            f"rest edge {k} meets loop {j} at {inter}",
                        )
                    )
                    break
                if bad:
                    break
            if bad:
                continue
            for k, seg in rest_segments:
                mid = Point((seg.a.x + seg.b.x) / 2, (seg.a.y + seg.b.y) / 2)
                loc = point_vs_closed_curve(mid, ring, check_simple=False)
                if loc is Location.INSIDE:
                    loops_ok = False
                    failures.append(
                        TuckFailure("conclusion-3", f"rest edge {k} enters loop {j}")
                    )
                    break
            for k in range(n_v):
                if i1 <= k <= i2:
                    continue
                loc = point_vs_closed_curve(path.vertices[k], ring, check_simple=False)
                if loc is Location.INSIDE:
                    loops_ok = False
                    failures.append(
                        TuckFailure("conclusion-3", f"vertex {k} inside loop {j}")
                    )
                    break

    return TuckReport(injective, closeness_ok, marks_ok, loops_ok, tuple(failures))
