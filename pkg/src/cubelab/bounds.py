"""Closed-form failure bounds for random partitions, in log space.

Exponents such as ``2**(width - k - 2) * delta**2`` are never materialized
as machine floats; everything is evaluated with mpmath at 128-bit precision.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction

import mpmath

from .dyadic import parse_rational
from .errors import UsageError

PRECISION_BITS = 128

_ctx = mpmath.mp.clone()
_ctx.prec = PRECISION_BITS


def _mpf(value) -> mpmath.mpf:
    if isinstance(value, Fraction):
        return _ctx.mpf(value.numerator) / value.denominator
    return _ctx.mpf(value)


@dataclass(frozen=True)
class LogProbability:
    """Natural log of a probability bound; clamped to 0 when vacuous."""

    value: mpmath.mpf
    clamped: bool
    raw: mpmath.mpf

    @classmethod
    def from_raw(cls, raw) -> "LogProbability":
        raw = _ctx.mpf(raw)
        if raw > 0:
            return cls(_ctx.mpf(0), True, raw)
        return cls(raw, False, raw)

    @property
    def vacuous(self) -> bool:
        return self.clamped

    def probability(self) -> mpmath.mpf:
        return _ctx.exp(self.value)

    def __float__(self) -> float:
        return float(self.value)

    def to_json(self) -> dict:
        return {
            "log_bound": _ctx.nstr(self.value, 20),
            "raw_log_bound": _ctx.nstr(self.raw, 20),
            "vacuous": self.clamped,
        }


@dataclass(frozen=True)
class BoundQuery:
    width: int
    k: int
    epsilon: Fraction
    delta: Fraction

    def __post_init__(self):
        object.__setattr__(self, "epsilon", parse_rational(self.epsilon))
        object.__setattr__(self, "delta", parse_rational(self.delta))
        if self.k < 1:
            raise UsageError("k must be >= 1")
        if self.delta <= 0:
            raise UsageError("delta must be positive")
        if not 0 <= self.epsilon <= 1:
            raise UsageError("epsilon must lie in [0, 1]")
        if self.width < 0:
            raise UsageError("width must be non-negative")


def bernstein_bound(n: int, delta) -> LogProbability:
    """``log(2 exp(-n delta^2 / 4))``, the tail bound for a binomial mean."""
    if n < 0:
        raise UsageError("n must be non-negative")
    d = _mpf(parse_rational(delta) if not isinstance(delta, float) else delta)
    if d <= 0:
        raise UsageError("delta must be positive")
    return LogProbability.from_raw(_ctx.log(2) - n * d * d / 4)


def prop1_failure_log_bound(q: BoundQuery) -> LogProbability:
    """Failure bound for the translate-intersection clause over all |X| <= k.

    ``width (k+1)^2 ln 2 - 2^(width-k-2) delta^2``.
    """
    d = _mpf(q.delta)
    poly = q.width * (q.k + 1) ** 2 * _ctx.log(2)
    expo = _ctx.ldexp(d * d, q.width - q.k - 2)
    return LogProbability.from_raw(poly - expo)


def prop2_failure_log_bound(q: BoundQuery) -> LogProbability:
    """Failure bound for the even-split clause: ``(width+1) ln 2 - 2^width eps delta^2 / 4``."""
    d = _mpf(q.delta)
    e = _mpf(q.epsilon)
    poly = (q.width + 1) * _ctx.log(2)
    expo = _ctx.ldexp(e * d * d, q.width - 2)
    return LogProbability.from_raw(poly - expo)


def _both_ok(w: int, k: int, eps, delta, target) -> bool:
    q = BoundQuery(w, k, eps, delta)
    return (
        prop1_failure_log_bound(q).value <= target
        and prop2_failure_log_bound(q).value <= target
    )


def _decreasing_from(k: int, eps: Fraction, delta: Fraction) -> int:
    """A width past which both raw log-bounds strictly decrease."""
    # raw1(w+1) - raw1(w) = (k+1)^2 ln2 - 2^(w-k-2) d^2; likewise for raw2
    d2 = _mpf(delta) ** 2
    w = 1
    while True:
        step1 = (k + 1) ** 2 * _ctx.log(2) - _ctx.ldexp(d2, w - k - 2)
        step2 = _ctx.log(2) - _ctx.ldexp(_mpf(eps) * d2, w - 2)
        if step1 < 0 and step2 < 0:
            return w
        w += 1


def minimal_width(k: int, epsilon, delta, target) -> int:
    """Least width at which both failure log-bounds are <= ``target`` (< 0)."""
    eps = parse_rational(epsilon)
    d = parse_rational(delta)
    target = _ctx.mpf(target)
    if target >= 0:
        raise UsageError("target log-probability must be negative")
    if eps <= 0:
        raise UsageError("epsilon must be positive for a finite minimal width")
    knee = _decreasing_from(k, eps, d)
    for w in range(1, knee + 1):
        if _both_ok(w, k, eps, d, target):
            return w
    # past the knee both bounds are strictly decreasing: gallop, then bisect
    lo, hi = knee, knee + 1
    while not _both_ok(hi, k, eps, d, target):
        lo, hi = hi, hi + 2 * (hi - lo)
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if _both_ok(mid, k, eps, d, target):
            hi = mid
        else:
            lo = mid
    return hi


def bounds_table(widths, k: int, epsilon, delta) -> list[dict]:
    rows = []
    for w in widths:
        q = BoundQuery(w, k, epsilon, delta)
        b1 = prop1_failure_log_bound(q)
        b2 = prop2_failure_log_bound(q)
        rows.append(
            {
                "width": w,
                "clause1": b1.to_json(),
                "clause2": b2.to_json(),
            }
        )
    return rows
