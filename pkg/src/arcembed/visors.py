"""Visor calculus for a PL map with marked points.

Given f and marked points z_1 < ... < z_n with f(z_1) < ... < f(z_n), a visor
for z_j is a point v < z_j with no marked point in [v, z_j) and f(v) > f(z_j).
A triple <a,b,c> removes v when

  (1) a < v < b and z_j < c;
  (2) (a,b) contains no marked point;
  (3) a = 0 with 0 unmarked, or f(a) <= f on [a,b];
  (4) c = 1, or f(c) >= f on [a,b];
  (5) f(b) <= f on [b,c].

Everything here is decided exactly over a finite candidate set: breakpoints,
marked points, {0,1}, and level crossings at the finitely many relevant
levels.  Extremal witnesses of the five conditions land on that set because
each condition is a union of linear constraints per PL piece; the test suite
cross-checks the decision against a dense-grid brute-force oracle rather than
taking that for granted.
"""

from __future__ import annotations

import functools
from dataclasses import dataclass, replace
from fractions import Fraction
from typing import Iterable, Optional

from .plmap import PLMap, level_crossings, range_max, range_min


class OrderHypothesisViolated(ValueError):
    pass


class NotAVisor(ValueError):
    pass


class NotRemovable(ValueError):
    pass


class NonRemovableVisor(ValueError):
    pass


class TargetSelectionFailed(RuntimeError):
    pass


@dataclass(frozen=True)
class MarkedSet:
    points: tuple[Fraction, ...]

    def __post_init__(self):
        pts = self.points
        if any(not (0 <= z <= 1) for z in pts):
            raise ValueError("marked points must lie in [0,1]")
        if any(b <= a for a, b in zip(pts, pts[1:])):
            raise ValueError("marked points must be strictly increasing")

    def __len__(self):
        return len(self.points)

    def __contains__(self, x) -> bool:
        return Fraction(x) in self.points


def marked(points: Iterable) -> MarkedSet:
    return MarkedSet(tuple(Fraction(p) for p in points))


def check_order_hypothesis(f: PLMap, Z: MarkedSet) -> None:
    vals = [f(z) for z in Z.points]
    if any(b <= a for a, b in zip(vals, vals[1:])):
        raise OrderHypothesisViolated(
            "marked values must be strictly increasing under f"
        )


def classify_visor(f: PLMap, Z: MarkedSet, v) -> Optional[int]:
    """The 1-based index j such that v is a visor for z_j, or None."""
    check_order_hypothesis(f, Z)
    v = Fraction(v)
    if v in Z:
        return None
    for j, z in enumerate(Z.points, start=1):
        if z > v:
            return j if f(v) > f(z) else None
    return None


@dataclass(frozen=True)
class VisorComponent:
    j: int
    lo: Fraction
    hi: Fraction
    closed_left: bool  # lo itself is a visor (only possible at lo = 0)


@functools.lru_cache(maxsize=256)
def _crossings(f: PLMap, level: Fraction) -> tuple[Fraction, ...]:
    return tuple(level_crossings(f, level, 0, 1))


def visor_components(f: PLMap, Z: MarkedSet) -> list[VisorComponent]:
    """Maximal intervals of visor points, labelled by their marked index.

    The union of the returned intervals is exactly the visor set; an interval
    is open except that the left end 0 is included when 0 is itself a visor.
    """
    check_order_hypothesis(f, Z)
    comps: list[VisorComponent] = []
    zs = Z.points
    for j, zj in enumerate(zs, start=1):
        lb = zs[j - 2] if j >= 2 else Fraction(0)
        lvl = f(zj)
        cuts = {lb, zj}
        cuts.update(x for x in f.xs if lb < x < zj)
        cuts.update(_crossings(f, lvl))
        cuts = sorted(c for c in cuts if lb <= c <= zj)
        cells = []
        for p, q in zip(cuts, cuts[1:]):
            if f((p + q) / 2) > lvl:
                cells.append((p, q))
        merged: list[list[Fraction]] = []
        for p, q in cells:
            if merged and merged[-1][1] == p and f(p) > lvl:
                merged[-1][1] = q
            else:
                merged.append([p, q])
        for lo, hi in merged:
            closed_left = j == 1 and lo == 0 and f(Fraction(0)) > lvl
            comps.append(VisorComponent(j, lo, hi, closed_left))
    return comps


@dataclass(frozen=True)
class RemovalTriple:
    a: Fraction
    b: Fraction
    c: Fraction


def removal_conditions(
    f: PLMap, Z: MarkedSet, v, triple: RemovalTriple
) -> tuple[bool, bool, bool, bool, bool]:
    """The five removal conditions, each independently assertable."""
    v = Fraction(v)
    j = classify_visor(f, Z, v)
    if j is None:
        raise NotAVisor(f"{v} is not a visor")
    zj = Z.points[j - 1]
    a, b, c = triple.a, triple.b, triple.c
    c1 = a < v < b and zj < c
    c2 = not any(a < z < b for z in Z.points)
    c3 = (a == 0 and 0 not in Z) or f(a) <= range_min(f, a, b)
    c4 = c == 1 or f(c) >= range_max(f, a, b)
    c5 = f(b) <= range_min(f, b, c) if b <= c else False
    return (c1, c2, c3, c4, c5)


def triple_removes(f: PLMap, Z: MarkedSet, v, triple: RemovalTriple) -> bool:
    return all(removal_conditions(f, Z, v, triple))


@functools.lru_cache(maxsize=256)
def _base_candidates(f: PLMap, Z: MarkedSet) -> tuple[Fraction, ...]:
    pts: set[Fraction] = {Fraction(0), Fraction(1)}
    pts.update(f.xs)
    pts.update(Z.points)
    levels = {f(z) for z in Z.points}
    levels.update(f.ys)
    for lev in levels:
        pts.update(_crossings(f, lev))
    return tuple(sorted(pts))


def _candidates_for(f: PLMap, Z: MarkedSet, extra_level: Fraction) -> list[Fraction]:
    pts = set(_base_candidates(f, Z))
    pts.update(_crossings(f, extra_level))
    return sorted(pts)


def _stay_above_limit(f: PLMap, b: Fraction) -> Fraction:
    """Largest c such that f >= f(b) on [b,c] (i.e. the last point before f
    first dips below the level f(b) to the right of b)."""
    fb = f(b)
    limit = Fraction(1)
    for x0, x1, y0, y1 in f.pieces():
        if x1 <= b:
            continue
        lo = max(x0, b)
        v_lo = y0 + (y1 - y0) * (lo - x0) / (x1 - x0) if x1 > x0 else y0
        if v_lo < fb:
            return lo if lo > b else b
        if y1 < fb:
            # crossing inside this piece
            x = x0 + (fb - y0) * (x1 - x0) / (y1 - y0)
            return x
    return limit


def removal_search(f: PLMap, Z: MarkedSet, v, *, reverse: bool = False):
    """Search the finite candidate set for a removing triple.

    Returns a RemovalTriple or None.  `reverse` flips the enumeration order;
    it exists so tests can confirm order-independence of the minimal interval.
    """
    v = Fraction(v)
    j = classify_visor(f, Z, v)
    if j is None:
        raise NotAVisor(f"{v} is not a visor")
    found = _search(f, Z, v, j, want_minimal=False, reverse=reverse)
    return found


def _search(
    f: PLMap,
    Z: MarkedSet,
    v: Fraction,
    j: int,
    *,
    want_minimal: bool,
    reverse: bool = False,
):
    zj = Z.points[j - 1]
    lvlj = f(zj)
    cr = _crossings(f, lvlj)
    r = max((x for x in cr if x < v), default=Fraction(0))
    s_candidates = [x for x in cr if x > v]
    if not s_candidates:
        return None
    s = min(s_candidates)
    below = [z for z in Z.points if z < v]
    a_lo = max(below) if below else Fraction(0)
    cand = _candidates_for(f, Z, f(v))
    a_cands = [x for x in cand if a_lo <= x <= r and x < v]
    b_cands = [x for x in cand if s <= x <= zj]
    c_cands = [x for x in cand if zj < x <= 1]
    if reverse:
        a_cands = a_cands[::-1]
        b_cands = b_cands[::-1]
        c_cands = c_cands[::-1]

    zero_unmarked = 0 not in Z

    def a_ok(a: Fraction, b: Fraction) -> bool:
        if a == 0 and zero_unmarked:
            return True
        return f(a) <= range_min(f, a, b)

    def find_c(a: Fraction, b: Fraction) -> Optional[Fraction]:
        c_hi = _stay_above_limit(f, b)
        M = range_max(f, a, b)
        for c in sorted(c_cands, reverse=True):
            if c > c_hi:
                continue
            if c == 1 or f(c) >= M:
                return c
        return None

    best = None
    for b in sorted(b_cands):
        for a in sorted(a_cands, reverse=True):
            if not a_ok(a, b):
                continue
            c = find_c(a, b)
            if c is not None:
                if not want_minimal:
                    return RemovalTriple(a, b, c)
                return RemovalTriple(a, b, c)  # minimal b, maximal a, some c
    return best


@dataclass(frozen=True)
class MinimalInterval:
    a: Fraction
    b: Fraction
    witness_c: Fraction


def minimal_removal_interval(f: PLMap, Z: MarkedSet, v) -> MinimalInterval:
    """The unique minimal interval [a_v, b_v] admitting a removing triple.

    By directedness of the set of valid (a,b) pairs, the minimal interval is
    (max valid a, min valid b); the enumeration below scans b ascending and a
    descending, so the first hit is exactly that pair.
    """
    v = Fraction(v)
    j = classify_visor(f, Z, v)
    if j is None:
        raise NotAVisor(f"{v} is not a visor")
    got = _search(f, Z, v, j, want_minimal=True)
    if got is None:
        raise NotRemovable(f"visor {v} admits no removing triple")
    mi = MinimalInterval(got.a, got.b, got.c)
    _assert_minimal_structure(f, Z, v, mi)
    return mi


def _assert_minimal_structure(f, Z, v, mi: MinimalInterval) -> None:
    if mi.a != 0 and f(mi.a) != f(mi.b):
        raise AssertionError("minimal interval violates endpoint structure")
    fb = f(mi.b)
    for x in f.xs:
        if mi.a < x < mi.b and f(x) <= fb:
            raise AssertionError("minimal interval has interior dip")


@dataclass(frozen=True)
class RemovabilityReport:
    all_removable: bool
    failing: tuple[tuple[int, Fraction, Fraction], ...]  # (j, cell lo, cell hi)


def all_visors_removable(f: PLMap, Z: MarkedSet) -> RemovabilityReport:
    """Decide removability over every real visor point.

    Each visor component is subdivided at candidate-set abscissae and one
    representative per open cell is tested, plus every candidate point that is
    itself a visor.  (Removability is in fact constant per component, but the
    subdivision costs little and makes no unstated assumption.)
    """
    check_order_hypothesis(f, Z)
    comps = visor_components(f, Z)
    cand = set(_base_candidates(f, Z))
    failing: list[tuple[int, Fraction, Fraction]] = []
    for comp in comps:
        cuts = sorted({comp.lo, comp.hi} | {x for x in cand if comp.lo < x < comp.hi})
        probes: list[tuple[Fraction, Fraction, Fraction]] = []
        for p, q in zip(cuts, cuts[1:]):
            probes.append(((p + q) / 2, p, q))
        for x in cuts[1:-1]:
            if classify_visor(f, Z, x) == comp.j:
                probes.append((x, x, x))
        if comp.closed_left:
            probes.append((comp.lo, comp.lo, comp.lo))
        for vv, lo, hi in probes:
            if classify_visor(f, Z, vv) != comp.j:
                continue
            if _search(f, Z, vv, comp.j, want_minimal=False) is None:
                failing.append((comp.j, lo, hi))
    failing.sort()
    return RemovabilityReport(not failing, tuple(failing))


@dataclass(frozen=True)
class FamilyMember:
    v: Fraction
    interval: MinimalInterval
    target: Optional[Fraction] = None


@dataclass(frozen=True)
class VisorFamily:
    members: tuple[FamilyMember, ...]


def choose_visor_family(f: PLMap, Z: MarkedSet) -> VisorFamily:
    """A finite family covering all visors with distinct minimal intervals.

    Each member's representative v attains the maximum of f on its interval;
    such a point is itself a visor for the same marked index (the maximum
    dominates f(v) > f(z_j)), so the three family conditions hold.
    """
    report = all_visors_removable(f, Z)
    if not report.all_removable:
        raise NonRemovableVisor(f"non-removable visor cells: {report.failing}")
    intervals: dict[tuple[Fraction, Fraction], MinimalInterval] = {}
    for comp in comps_for_family(f, Z):
        rep = (comp.lo + comp.hi) / 2
        mi = minimal_removal_interval(f, Z, rep)
        intervals[(mi.a, mi.b)] = mi
    members = []
    for (a, b), mi in sorted(intervals.items()):
        top = range_max(f, a, b)
        vstar = None
        for x in f.xs:
            if a < x < b and f(x) == top:
                vstar = x
                break
        if vstar is None:
            raise AssertionError("no interior breakpoint attains the interval max")
        members.append(FamilyMember(vstar, mi, None))
    members.sort(key=lambda m: m.v)
    return VisorFamily(tuple(members))


def comps_for_family(f: PLMap, Z: MarkedSet) -> list[VisorComponent]:
    return visor_components(f, Z)


def _valid_targets_sorted_desc(
    f: PLMap, Z: MarkedSet, v: Fraction, interval: MinimalInterval
) -> list[Fraction]:
    """All candidate c with <a_v,b_v,c> removing v AND c beyond every marked
    point whose value lies below f(v), in descending order."""
    j = classify_visor(f, Z, v)
    if j is None:
        raise NotAVisor(f"{v} is not a visor")
    zj = Z.points[j - 1]
    a, b = interval.a, interval.b
    M = range_max(f, a, b)
    c_hi = _stay_above_limit(f, b)
    threshold = zj
    for jj, z in enumerate(Z.points, start=1):
        if f(v) > f(z):
            threshold = max(threshold, z)
    cand = set(_candidates_for(f, Z, f(v)))
    cand.update(_crossings(f, M) if 0 <= M <= 1 else ())
    cand.add(Fraction(1))
    out = []
    for c in sorted(cand, reverse=True):
        if not (zj < c <= c_hi):
            continue
        if c == 1 or f(c) >= M:
            if c > threshold:
                out.append(c)
    return out


def max_target(f: PLMap, Z: MarkedSet, v, interval: MinimalInterval) -> Fraction:
    """The maximal c such that <a_v,b_v,c> removes v.

    The maximum is automatically beyond every marked point obstructed by v
    (asserted; a violation would signal a removability precondition failure).
    """
    v = Fraction(v)
    targets = _valid_targets_sorted_desc(f, Z, v, interval)
    if not targets:
        raise NotRemovable(f"no removing c exists for visor {v}")
    return targets[0]


def assign_targets(f: PLMap, Z: MarkedSet, family: VisorFamily) -> VisorFamily:
    """Choose a target c_v per member so that u < v implies c_u < a_v or
    c_v <= c_u.

    Members are processed by decreasing f(v) (ties: ascending v).  Case 1
    caps the new target by the nearest chosen target on the left; case 2
    either places it left of the nearest chosen interval on the right or
    reuses that interval's target.
    """
    order = sorted(family.members, key=lambda m: (-f(m.v), m.v))
    chosen: dict[Fraction, Fraction] = {}

    def coherent(u_v, u_c, w_v, w_a, w_c) -> bool:
        # pair (u, w) with u.v < w.v
        return u_c < w_a or w_c <= u_c

    for m in order:
        targets = _valid_targets_sorted_desc(f, Z, m.v, m.interval)
        if not targets:
            raise TargetSelectionFailed(f"no target exists for visor {m.v}")
        left = [o for o in family.members if o.v < m.v and o.v in chosen]
        right = [o for o in family.members if o.v > m.v and o.v in chosen]
        pick: Optional[Fraction] = None
        if left and (
            not right or all(chosen[left[-1].v] < o.interval.a for o in right)
        ):
            cap = chosen[left[-1].v]
            for c in targets:
                if c <= cap:
                    pick = c
                    break
            if pick is None:
                # the left neighbour's target itself removes m (claim)
                if cap in targets or _is_target(f, Z, m, cap):
                    pick = cap
        elif right:
            v0 = right[0]
            for c in targets:
                if c < v0.interval.a:
                    pick = c
                    break
            if pick is None:
                cap = chosen[v0.v]
                if cap in targets or _is_target(f, Z, m, cap):
                    pick = cap
        else:
            pick = targets[0]
        if pick is None:
            raise TargetSelectionFailed(
                f"target recursion found no coherent choice for visor {m.v}"
            )
        chosen[m.v] = pick
        # verify the invariant over all chosen pairs
        done = [o for o in family.members if o.v in chosen]
        for i in range(len(done)):
            for k in range(i + 1, len(done)):
                u, w = done[i], done[k]
                if not coherent(u.v, chosen[u.v], w.v, w.interval.a, chosen[w.v]):
                    raise TargetSelectionFailed(
                        f"coherence violated for pair ({u.v}, {w.v})"
                    )
    new_members = tuple(
        replace(m, target=chosen[m.v]) for m in family.members
    )
    return VisorFamily(new_members)


def _is_target(f: PLMap, Z: MarkedSet, m: FamilyMember, c: Fraction) -> bool:
    triple = RemovalTriple(m.interval.a, m.interval.b, c)
    if not triple_removes(f, Z, m.v, triple):
        return False
    for z in Z.points:
        if f(m.v) > f(z) and c <= z:
            return False
    return True


def family_invariants_ok(f: PLMap, Z: MarkedSet, family: VisorFamily) -> bool:
    """Exact check of the family conditions plus target coherence."""
    ivs = [(m.interval.a, m.interval.b) for m in family.members]
    if len(set(ivs)) != len(ivs):
        return False
    for (a1, b1), (a2, b2) in zip(ivs, ivs[1:]):
        if a2 < b1:  # interiors must not overlap (members sorted by v)
            return False
    for comp in visor_components(f, Z):
        mid = (comp.lo + comp.hi) / 2
        if not any(m.interval.a <= mid <= m.interval.b for m in family.members):
            return False
    for m in family.members:
        if f(m.v) != range_max(f, m.interval.a, m.interval.b):
            return False
        if m.target is not None and not _is_target(f, Z, m, m.target):
            return False
    for i in range(len(family.members)):
        for k in range(i + 1, len(family.members)):
            u, w = family.members[i], family.members[k]
            if u.target is None or w.target is None:
                continue
            if not (u.target < w.interval.a or w.target <= u.target):
                return False
    return True
