"""Outward-rounded floating-point intervals.

Every arithmetic operation widens its result by one ulp on each side, so a
computed interval always encloses the exact real result.  Used for hull
consistency and for bounding opaque nonlinear subterms; emptiness therefore
gives sound refutations.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction

INF = math.inf


def down(x: float) -> float:
    if x == -INF or math.isnan(x):
        return -INF
    return math.nextafter(x, -INF)


def up(x: float) -> float:
    if x == INF or math.isnan(x):
        return INF
    return math.nextafter(x, INF)


def fraction_down(q: Fraction) -> float:
    f = float(q)
    if math.isinf(f):
        return -INF if q < 0 else f
    return down(f) if Fraction(f) > q else f


def fraction_up(q: Fraction) -> float:
    f = float(q)
    if math.isinf(f):
        return INF if q > 0 else f
    return up(f) if Fraction(f) < q else f


@dataclass(frozen=True)
class Interval:
    lo: float
    hi: float

    def __post_init__(self):
        if math.isnan(self.lo) or math.isnan(self.hi):
            raise ValueError("NaN interval bound")

    def is_empty(self) -> bool:
        return self.lo > self.hi

    def width(self) -> float:
        return self.hi - self.lo

    def contains(self, x: float) -> bool:
        return self.lo <= x <= self.hi

    def midpoint(self) -> float:
        if self.lo == -INF and self.hi == INF:
            return 0.0
        if self.lo == -INF:
            return min(self.hi - 1.0, 0.0)
        if self.hi == INF:
            return max(self.lo + 1.0, 0.0)
        m = 0.5 * (self.lo + self.hi)
        if not math.isfinite(m):
            m = self.lo + 0.5 * (self.hi - self.lo)
        return m

    def __repr__(self) -> str:
        return "[%g, %g]" % (self.lo, self.hi)


EMPTY = Interval(1.0, -1.0)
FULL = Interval(-INF, INF)


def point(x) -> Interval:
    if isinstance(x, Fraction):
        return Interval(fraction_down(x), fraction_up(x))
    x = float(x)
    return Interval(x, x)


def make(lo, hi) -> Interval:
    return Interval(float(lo), float(hi))


def intersect(a: Interval, b: Interval) -> Interval:
    return Interval(max(a.lo, b.lo), min(a.hi, b.hi))


def hull(a: Interval, b: Interval) -> Interval:
    if a.is_empty():
        return b
    if b.is_empty():
        return a
    return Interval(min(a.lo, b.lo), max(a.hi, b.hi))


def add(a: Interval, b: Interval) -> Interval:
    if a.is_empty() or b.is_empty():
        return EMPTY
    return Interval(down(a.lo + b.lo), up(a.hi + b.hi))


def sub(a: Interval, b: Interval) -> Interval:
    if a.is_empty() or b.is_empty():
        return EMPTY
    return Interval(down(a.lo - b.hi), up(a.hi - b.lo))


def neg(a: Interval) -> Interval:
    if a.is_empty():
        return EMPTY
    return Interval(-a.hi, -a.lo)


def _safe_mul(x: float, y: float) -> float:
    if (x == 0.0 and math.isinf(y)) or (y == 0.0 and math.isinf(x)):
        return 0.0
    return x * y


def mul(a: Interval, b: Interval) -> Interval:
    if a.is_empty() or b.is_empty():
        return EMPTY
    cands = [_safe_mul(a.lo, b.lo), _safe_mul(a.lo, b.hi),
             _safe_mul(a.hi, b.lo), _safe_mul(a.hi, b.hi)]
    return Interval(down(min(cands)), up(max(cands)))


def div(a: Interval, b: Interval) -> Interval:
    if a.is_empty() or b.is_empty():
        return EMPTY
    if b.lo <= 0.0 <= b.hi:
        return FULL  # denominator may vanish: no information
    cands = [a.lo / b.lo, a.lo / b.hi, a.hi / b.lo, a.hi / b.hi]
    return Interval(down(min(cands)), up(max(cands)))


def sqrt(a: Interval) -> Interval:
    if a.is_empty() or a.hi < 0.0:
        return EMPTY
    lo = 0.0 if a.lo <= 0.0 else down(math.sqrt(a.lo))
    hi = INF if a.hi == INF else up(math.sqrt(a.hi))
    return Interval(max(lo, 0.0), hi)


def square(a: Interval) -> Interval:
    return mul(a, a) if not (a.lo <= 0.0 <= a.hi) else \
        Interval(0.0, up(max(_safe_mul(a.lo, a.lo), _safe_mul(a.hi, a.hi))))
