"""Tent-map factorization machinery.

Builds the repositioning map s for a tent map T_m and marked points Z so that
T_{2n-1} o s = T_m exactly, with each marked point sent onto an increasing
branch at a controlled height.  Pattern placement is deterministic leftmost
packing (one skipped tooth, then consecutive whole-tooth blocks), which keeps
outputs reproducible.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import Optional

from .plmap import (
    BranchKind,
    PLMap,
    branch_at,
    canonical_equal,
    compose,
    is_sawtooth,
    tent,
)
from .visors import MarkedSet, all_visors_removable


class InsufficientTeeth(ValueError):
    pass


class NoFixedPointOnBranch(ValueError):
    pass


class HypothesisViolated(ValueError):
    def __init__(self, clause: str, index: Optional[int] = None):
        self.clause = clause
        self.index = index
        msg = clause if index is None else f"{clause} (pattern {index})"
        super().__init__(msg)


CASE_A = "A"
CASE_B = "B"


@dataclass(frozen=True)
class PatternRecord:
    lo: Fraction
    hi: Fraction
    teeth: Fraction
    case: str


@dataclass(frozen=True)
class PatternPlan:
    a: tuple[Fraction, ...]  # a_0 < a_1 < ... < a_n
    patterns: tuple[PatternRecord, ...]


def choose_patterns(m: int, n: int) -> PatternPlan:
    """Leftmost packing: skip the first tooth of T_m, then lay the patterns
    consecutively, pattern i being a block of 2i-1 whole teeth."""
    if m < 1 or n < 1:
        raise ValueError("need m >= 1 and n >= 1")
    available = m // 2
    needed = 1 + sum(2 * i - 1 for i in range(1, n + 1))
    if available < needed:
        raise InsufficientTeeth(
            f"T_{m} has {available} whole teeth; packing needs {needed}"
        )
    tooth_w = Fraction(2, m)
    a = [tooth_w]
    patterns = []
    for i in range(1, n + 1):
        lo = a[-1]
        hi = lo + (2 * i - 1) * tooth_w
        a.append(hi)
        patterns.append(PatternRecord(lo, hi, Fraction(2 * i - 1), CASE_A))
    tm = tent(m)
    for i, rec in enumerate(patterns, start=1):
        info = is_sawtooth(tm, rec.lo, rec.hi)
        if info is None or info.teeth != rec.teeth or info.height != 1:
            raise AssertionError(f"pattern {i} is not a {rec.teeth}-tooth block")
    return PatternPlan(tuple(a), tuple(patterns))


def branch_fixed_point(m: int, lo, hi) -> Fraction:
    """Exact fixed point of T_m on an increasing branch [lo,hi]."""
    lo = Fraction(lo)
    hi = Fraction(hi)
    tm = tent(m)
    pieces = [p for p in tm.pieces() if p[0] <= lo and hi <= p[1]]
    if not pieces:
        raise NoFixedPointOnBranch("interval spans multiple branches")
    x0, x1, y0, y1 = pieces[0]
    slope = (y1 - y0) / (x1 - x0)
    if slope == 1:
        return lo  # identity branch: every point is fixed
    x = (y0 - slope * x0) / (1 - slope)
    if not (lo <= x <= hi):
        raise NoFixedPointOnBranch(f"fixed point {x} outside [{lo},{hi}]")
    return x


@dataclass(frozen=True)
class FactorInstance:
    m: int
    n: int
    Z: MarkedSet
    plan: PatternPlan
    s: PLMap

    def images(self) -> tuple[Fraction, ...]:
        return tuple(self.s(z) for z in self.Z.points)


def _first_half_of_own_tooth(info, i: int) -> tuple[Fraction, Fraction]:
    lo, hi = info.tooth(i)
    return lo, (lo + hi) / 2


def build_s(m: int, Z: MarkedSet, plan: PatternPlan) -> FactorInstance:
    """Construct s = s_{m,Z} for the given pattern plan and verify the
    factorization T_{2n-1} o s = T_m together with the position and branch
    facts it is meant to deliver."""
    n = len(Z)
    if len(plan.patterns) != n:
        raise HypothesisViolated("plan size does not match |Z|")
    tm = tent(m)
    denom = 2 * n - 1
    for i, rec in enumerate(plan.patterns, start=1):
        info = is_sawtooth(tm, rec.lo, rec.hi)
        if info is None:
            raise HypothesisViolated("pattern is not a sawtooth of the tent map", i)
        z = Z.points[i - 1]
        if rec.case == CASE_A:
            if info.teeth != 2 * i - 1 or info.height != 1:
                raise HypothesisViolated("pattern tooth count mismatch", i)
            t_lo, t_mid = _first_half_of_own_tooth(info, i)
            if not (t_lo < z < t_mid):
                raise HypothesisViolated(
                    "marked point not in the first half of its tooth", i
                )
        elif rec.case == CASE_B:
            if i != n:
                raise HypothesisViolated("half-tooth case only allowed last", i)
            if rec.hi != 1 or info.teeth != Fraction(2 * n - 1, 2):
                raise HypothesisViolated("half-tooth pattern shape mismatch", i)
            ht_lo, ht_hi = info.half_tooth()
            if not (ht_lo < z < ht_hi):
                raise HypothesisViolated("marked point not in the half-tooth", i)
        else:
            raise HypothesisViolated(f"unknown case tag {rec.case!r}", i)
        if not (rec.lo <= z <= rec.hi):
            raise HypothesisViolated("marked point outside its pattern", i)
    for r1, r2 in zip(plan.patterns, plan.patterns[1:]):
        if r2.lo < r1.hi:
            raise HypothesisViolated("patterns overlap")

    pts: list[tuple[Fraction, Fraction]] = []
    covered = [(rec.lo, rec.hi) for rec in plan.patterns]

    def in_pattern(x: Fraction) -> bool:
        return any(lo < x < hi for lo, hi in covered)

    for j in range(m + 1):
        x = Fraction(j, m)
        if not in_pattern(x):
            pts.append((x, Fraction(j % 2, denom)))
    for i, rec in enumerate(plan.patterns, start=1):
        pts.append((rec.lo, Fraction(0)))
        if rec.case == CASE_A:
            mid = (rec.lo + rec.hi) / 2
            pts.append((mid, Fraction(2 * i - 1, denom)))
            pts.append((rec.hi, Fraction(0)))
        else:
            pts.append((rec.hi, Fraction(1)))
    s = PLMap.from_pairs(pts)
    inst = FactorInstance(m, n, Z, plan, s)
    _verify_instance(inst)
    return inst


def _verify_instance(inst: FactorInstance) -> None:
    denom = 2 * inst.n - 1
    if not canonical_equal(compose(tent(denom), inst.s), tent(inst.m)):
        raise AssertionError("factorization identity failed")
    images = inst.images()
    for i, w in enumerate(images, start=1):
        lo = Fraction(2 * i - 2, denom)
        hi = Fraction(2 * i - 1, denom)
        if not (lo <= w <= hi):
            raise AssertionError(f"s(z_{i}) = {w} outside [{lo},{hi}]")
        if branch_at(inst.s, inst.Z.points[i - 1]).kind != BranchKind.INCREASING:
            raise AssertionError(f"s not increasing at z_{i}")
        if branch_at(tent(denom), w).kind != BranchKind.INCREASING:
            raise AssertionError(f"T_{denom} not increasing at s(z_{i})")
    if any(b <= a for a, b in zip(images, images[1:])):
        raise AssertionError("s not order-preserving on Z")


def check_shift_removability(inst: FactorInstance, ell: int, Zp: MarkedSet) -> bool:
    """With T_ell carrying Z' onto Z along increasing branches, every Z'-visor
    under s o T_ell is removable; returns the exact decision (True expected
    whenever the hypotheses hold)."""
    if len(Zp) != len(inst.Z):
        raise HypothesisViolated("|Z'| must equal |Z|")
    t_ell = tent(ell)
    for i, (zp, z) in enumerate(zip(Zp.points, inst.Z.points), start=1):
        if t_ell(zp) != z:
            raise HypothesisViolated("T_ell does not carry z'_i to z_i", i)
        if branch_at(t_ell, zp).kind != BranchKind.INCREASING:
            raise HypothesisViolated("T_ell not increasing at z'_i", i)
    g = compose(inst.s, t_ell)
    return all_visors_removable(g, Zp).all_removable
