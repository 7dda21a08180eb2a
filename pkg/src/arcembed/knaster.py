"""Inverse systems of open interval maps: composant evidence, extrema
counting through compositions, bounded-horizon index-set search, and the
assembly of the worked buckethandle instance.

Composant distinctness is only semi-decidable at a finite horizon: the
criterion quantifies over infinitely many levels, so reports carry evidence
counts, never a claim of sameness.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Optional, Sequence

from .plmap import (
    PLMap,
    canonical_equal,
    compose,
    interior_extrema,
    is_open_interval_map,
    tent,
)
from .tentfactor import (
    FactorInstance,
    PatternPlan,
    branch_fixed_point,
    build_s,
    choose_patterns,
)
from .visors import MarkedSet, RemovabilityReport, all_visors_removable, marked


class DepthUnavailable(ValueError):
    pass


class InconsistentThread(ValueError):
    pass


class NotFoundWithinHorizon(RuntimeError):
    pass


COMPOSITION_PIECE_GUARD = 200_000


@dataclass(frozen=True)
class InverseSystem:
    """Bonding maps f_1, f_2, ... given as an explicit prefix plus a periodic
    tail (the common case being a single repeated map)."""

    prefix: tuple[PLMap, ...]
    cycle: tuple[PLMap, ...]

    def __post_init__(self):
        if not self.cycle and not self.prefix:
            raise ValueError("system needs at least one bonding map")

    @classmethod
    def constant(cls, f: PLMap) -> "InverseSystem":
        return cls((), (f,))

    def map_at(self, i: int) -> PLMap:
        if i < 1:
            raise ValueError("levels are 1-based")
        if i <= len(self.prefix):
            return self.prefix[i - 1]
        if not self.cycle:
            raise DepthUnavailable(f"no bonding map at level {i}")
        return self.cycle[(i - len(self.prefix) - 1) % len(self.cycle)]

    def knaster_ok(self, depth: int) -> bool:
        return all(is_open_interval_map(self.map_at(i)) for i in range(1, depth + 1))


@dataclass(frozen=True)
class Thread:
    """A point of the inverse limit: explicit leading coordinates and a
    constant tail value (enough for fixed points and finite perturbations)."""

    head: tuple[Fraction, ...]
    tail: Optional[Fraction]

    @classmethod
    def constant(cls, c) -> "Thread":
        return cls((), Fraction(c))

    @classmethod
    def explicit(cls, head: Sequence, tail=None) -> "Thread":
        return cls(
            tuple(Fraction(x) for x in head),
            None if tail is None else Fraction(tail),
        )


def coordinate(p: Thread, i: int) -> Fraction:
    if i < 1:
        raise ValueError("coordinates are 1-based")
    if i <= len(p.head):
        return p.head[i - 1]
    if p.tail is None:
        raise DepthUnavailable(f"thread has no coordinate at level {i}")
    return p.tail


def check_thread(sys: InverseSystem, p: Thread, depth: int) -> None:
    for i in range(1, depth + 1):
        if sys.map_at(i)(coordinate(p, i + 1)) != coordinate(p, i):
            raise InconsistentThread(f"bonding relation fails at level {i}")


def composant_evidence(sys: InverseSystem, p: Thread, q: Thread, horizon: int) -> int:
    """Number of levels i <= horizon with an extremum of f_i strictly between
    the two (i+1)-coordinates.  A count growing with the horizon is evidence
    of distinct composants; 0 is merely consistent with sameness."""
    check_thread(sys, p, horizon + 1)
    check_thread(sys, q, horizon + 1)
    count = 0
    for i in range(1, horizon + 1):
        a = coordinate(p, i + 1)
        b = coordinate(q, i + 1)
        if a == b:
            continue
        lo, hi = (a, b) if a < b else (b, a)
        if interior_extrema(sys.map_at(i), lo, hi):
            count += 1
    return count


def _tent_order(f: PLMap) -> Optional[int]:
    m = len(f.breakpoints) - 1
    return m if canonical_equal(f, tent(m)) else None


def _window_tent_order(sys: InverseSystem, i: int, k: int) -> Optional[int]:
    """If every bonding map in [i, k) is a tent map, the product order of the
    composition f_i o ... o f_{k-1}; else None."""
    prod = 1
    for t in range(i, k):
        m = _tent_order(sys.map_at(t))
        if m is None:
            return None
        prod *= m
    return prod


def _tent_extrema_between(M: int, a: Fraction, b: Fraction) -> int:
    """#(strict interior extrema of T_M strictly between a and b) = #(grid
    points j/M, 0 < j < M, inside the open interval)."""
    if a == b:
        return 0
    lo, hi = (a, b) if a < b else (b, a)
    j_min = math.floor(lo * M) + 1
    j_max = math.ceil(hi * M) - 1
    j_min = max(j_min, 1)
    j_max = min(j_max, M - 1)
    return max(0, j_max - j_min + 1)


def composed_map(sys: InverseSystem, i: int, k: int) -> PLMap:
    """The exact composition f_i o f_{i+1} o ... o f_{k-1} (level k -> i)."""
    if not i < k:
        raise ValueError("need i < k")
    est = 1
    for t in range(i, k):
        est *= max(1, len(sys.map_at(t).breakpoints) - 1)
        if est > COMPOSITION_PIECE_GUARD:
            raise DepthUnavailable(
                "composition too large to materialize; tent fast path unavailable"
            )
    g = sys.map_at(k - 1)
    for t in range(k - 2, i - 1, -1):
        g = compose(sys.map_at(t), g)
    return g


def extrema_between_composed(sys: InverseSystem, i: int, k: int, x_k, y_k) -> int:
    """Interior extrema count of f_i o ... o f_{k-1} strictly between the two
    level-k values."""
    x_k = Fraction(x_k)
    y_k = Fraction(y_k)
    if not i < k:
        raise ValueError("need i < k")
    M = _window_tent_order(sys, i, k)
    if M is not None:
        return _tent_extrema_between(M, x_k, y_k)
    g = composed_map(sys, i, k)
    if x_k == y_k:
        return 0
    lo, hi = (x_k, y_k) if x_k < y_k else (y_k, x_k)
    return len(interior_extrema(g, lo, hi))


def _chain_increasing_at(sys: InverseSystem, i: int, k: int, x: Fraction) -> bool:
    """Whether f_i o ... o f_{k-1} is increasing at the level-k point x,
    decided by one-sided slope-sign propagation (no materialization)."""

    def propagate(side: int) -> int:
        cur = x
        sd = side
        for t in range(k - 1, i - 1, -1):
            f = sys.map_at(t)
            slope = f.slope_right(cur) if sd > 0 else f.slope_left(cur)
            if slope is None or slope == 0:
                return 0
            sgn = 1 if slope > 0 else -1
            sd = sd * sgn
            cur = f(cur)
        return sd

    return propagate(+1) == +1 and propagate(-1) == -1


def _chain_order_preserving(
    sys: InverseSystem, i: int, k: int, values: Sequence[Fraction]
) -> bool:
    g_vals = []
    for x in values:
        cur = x
        for t in range(k - 1, i - 1, -1):
            cur = sys.map_at(t)(cur)
        g_vals.append(cur)
    pairs = sorted(zip(values, g_vals))
    return all(
        b[1] > a[1] for a, b in zip(pairs, pairs[1:])
    )


def _chain_increasing_on_tail(sys: InverseSystem, i: int, k: int, z: Fraction) -> bool:
    """Whether f_i o ... o f_{k-1} is increasing on [z, 1]."""
    M = _window_tent_order(sys, i, k)
    if M is not None:
        return z >= Fraction(M - 1, M)
    g = composed_map(sys, i, k)
    pieces = [p for p in g.pieces() if p[1] > z]
    return all((y1 - y0) > 0 for _, _, y0, y1 in pieces)


def find_index_sets(
    sys: InverseSystem,
    points: Sequence[Thread],
    i_max: int,
    horizon: int,
) -> list[list[int]]:
    """Bounded-horizon search for nested index-set prefixes J_1 >= ... >=
    J_{i_max} satisfying, for each i with Z_i the first i points:

      (1) J_{i+1} subset of J_i minus its first element;
      (2) coordinates of Z_i distinct at every level in J_i;
      (3,4) every window map between levels of J_i order-preserving and
            increasing at the Z_i coordinates;
      (5) between any two Z_i coordinates at a level j > j_i(1), the window
          map from j_i(1) has at least 4i extrema;
      (6) from each coordinate to 1 it has at least 2i extrema or is
          increasing on the tail.

    Absence within the horizon is not a refutation; the method raises
    NotFoundWithinHorizon in that case.
    """
    if i_max < 1 or horizon < 2:
        raise NotFoundWithinHorizon("horizon too small for prefixes of length 2")
    for p in points:
        check_thread(sys, p, horizon + 1)

    def coords(i: int, level: int) -> list[Fraction]:
        return [coordinate(points[t], level) for t in range(i)]

    def extrema_ge(i0: int, j: int, a: Fraction, b: Fraction, need: int) -> bool:
        return extrema_between_composed(sys, i0, j, a, b) >= need

    def valid_extension(i: int, j1: int, chain: list[int], j: int) -> bool:
        zc = coords(i, j)
        if len(set(zc)) != len(zc):
            return False
        prev = chain[-1]
        if not _chain_order_preserving(sys, prev, j, zc):
            return False
        if not all(_chain_increasing_at(sys, prev, j, z) for z in zc):
            return False
        for s in range(len(zc)):
            for t in range(s + 1, len(zc)):
                if not extrema_ge(j1, j, zc[s], zc[t], 4 * i):
                    return False
        for z in zc:
            if not (
                extrema_ge(j1, j, z, Fraction(1), 2 * i)
                or _chain_increasing_on_tail(sys, j1, j, z)
            ):
                return False
        return True

    def build_level(i: int, pool: list[int]) -> Optional[list[int]]:
        for pos, j1 in enumerate(pool):
            zc1 = coords(i, j1)
            if len(set(zc1)) != len(zc1):
                continue
            chain = [j1]
            for j in pool[pos + 1 :]:
                if valid_extension(i, j1, chain, j):
                    chain.append(j)
            if len(chain) >= 2:
                return chain
        return None

    result: list[list[int]] = []
    pool = list(range(1, horizon + 1))
    for i in range(1, min(i_max, len(points)) + 1):
        chain = build_level(i, pool)
        if chain is None:
            raise NotFoundWithinHorizon(
                f"no admissible index set for the first {i} points at horizon {horizon}"
            )
        result.append(chain)
        pool = chain[1:]
    return result


@dataclass(frozen=True)
class ExampleInstance:
    n: int
    k: int
    m: int
    plan: PatternPlan
    z: tuple[Fraction, ...]
    factor: FactorInstance
    f: PLMap
    zprime: tuple[Fraction, ...]
    removability: RemovabilityReport


def build_example_instance(n: int) -> ExampleInstance:
    """The worked buckethandle instance: minimal k with 2^(k-1) >= 1 + n^2,
    fixed points on the increasing tooth halves, the factorization map s, and
    f = s o T_{2n-1} with its marked fixed points and removability verdict."""
    if n < 1:
        raise ValueError("need n >= 1")
    need = 1 + sum(2 * i - 1 for i in range(1, n + 1))
    k = 1
    while 2 ** (k - 1) < need:
        k += 1
    m = 2**k
    plan = choose_patterns(m, n)
    zs = []
    tm = tent(m)
    for i, rec in enumerate(plan.patterns, start=1):
        from .plmap import is_sawtooth

        info = is_sawtooth(tm, rec.lo, rec.hi)
        t_lo, t_hi = info.tooth(i)
        mid = (t_lo + t_hi) / 2
        zs.append(branch_fixed_point(m, t_lo, mid))
    Z = marked(zs)
    factor = build_s(m, Z, plan)
    f = compose(factor.s, tent(2 * n - 1))
    zprime = factor.images()
    for w in zprime:
        if f(w) != w:
            raise AssertionError(f"{w} is not fixed under the assembled map")
    removability = all_visors_removable(f, marked(zprime))
    return ExampleInstance(
        n=n,
        k=k,
        m=m,
        plan=plan,
        z=tuple(Z.points),
        factor=factor,
        f=f,
        zprime=tuple(zprime),
        removability=removability,
    )
