"""Exact dyadic rationals and rational parsing.

Every density and mass handled by the verifiers has a power-of-two
denominator, so pass/fail decisions never need floating point.
"""

from __future__ import annotations

from fractions import Fraction
from numbers import Rational
from typing import Union

RationalLike = Union["DyadicRational", Fraction, int]


def parse_rational(text) -> Fraction:
    """Parse ``"p/q"``, an integer, or a Fraction into an exact Fraction.

    Floats are refused: a config written as ``0.1`` is ambiguous.
    """
    if isinstance(text, DyadicRational):
        return text.to_fraction()
    if isinstance(text, (Fraction, int)) and not isinstance(text, bool):
        return Fraction(text)
    if isinstance(text, float):
        raise ValueError(f"float {text!r} not accepted; write rationals as 'p/q'")
    s = str(text).strip()
    if not s:
        raise ValueError("empty rational")
    if any(c in s for c in ".eE"):
        raise ValueError(f"{s!r} is not of the form 'p/q'")
    return Fraction(s)


class DyadicRational:
    """``numerator / 2**log2_denominator`` kept in canonical form.

    Canonical means the numerator is odd, or zero with exponent zero.
    """

    __slots__ = ("_num", "_exp")

    def __init__(self, numerator: int = 0, log2_denominator: int = 0):
        if log2_denominator < 0:
            numerator <<= -log2_denominator
            log2_denominator = 0
        if numerator == 0:
            log2_denominator = 0
        else:
            tz = (numerator & -numerator).bit_length() - 1
            shift = min(tz, log2_denominator)
            numerator >>= shift
            log2_denominator -= shift
        self._num = int(numerator)
        self._exp = int(log2_denominator)

    @property
    def numerator(self) -> int:
        return self._num

    @property
    def log2_denominator(self) -> int:
        return self._exp

    @property
    def denominator(self) -> int:
        return 1 << self._exp

    @classmethod
    def from_fraction(cls, value) -> "DyadicRational":
        f = Fraction(value)
        d = f.denominator
        if d & (d - 1):
            raise ValueError(f"{f} is not dyadic")
        return cls(f.numerator, d.bit_length() - 1)

    @classmethod
    def ratio(cls, count: int, width: int) -> "DyadicRational":
        """``count / 2**width``."""
        return cls(count, width)

    def to_fraction(self) -> Fraction:
        return Fraction(self._num, 1 << self._exp)

    def as_pair(self) -> tuple[int, int]:
        return (self._num, self._exp)

    def __float__(self) -> float:
        return float(self.to_fraction())

    def __repr__(self) -> str:
        return f"DyadicRational({self._num}, {self._exp})"

    def __str__(self) -> str:
        if self._exp == 0:
            return str(self._num)
        return f"{self._num}/2^{self._exp}"

    def __hash__(self) -> int:
        return hash(self.to_fraction())

    # arithmetic

    def _coerce(self, other):
        if isinstance(other, DyadicRational):
            return other
        if isinstance(other, int) and not isinstance(other, bool):
            return DyadicRational(other, 0)
        if isinstance(other, Fraction):
            try:
                return DyadicRational.from_fraction(other)
            except ValueError:
                return None
        return None

    def __add__(self, other):
        o = self._coerce(other)
        if o is None:
            if isinstance(other, Rational):
                return self.to_fraction() + other
            return NotImplemented
        e = max(self._exp, o._exp)
        return DyadicRational((self._num << (e - self._exp)) + (o._num << (e - o._exp)), e)

    __radd__ = __add__

    def __neg__(self) -> "DyadicRational":
        return DyadicRational(-self._num, self._exp)

    def __abs__(self) -> "DyadicRational":
        return DyadicRational(abs(self._num), self._exp)

    def __sub__(self, other):
        o = self._coerce(other)
        if o is None:
            if isinstance(other, Rational):
                return self.to_fraction() - other
            return NotImplemented
        return self + (-o)

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, other):
        o = self._coerce(other)
        if o is None:
            if isinstance(other, Rational):
                return self.to_fraction() * other
            return NotImplemented
        return DyadicRational(self._num * o._num, self._exp + o._exp)

    __rmul__ = __mul__

    def halve(self, times: int = 1) -> "DyadicRational":
        return DyadicRational(self._num, self._exp + times)

    # comparison: cross-multiplied integers, never rounded

    def _cmp(self, other) -> int:
        if isinstance(other, DyadicRational):
            e = max(self._exp, other._exp)
            a = self._num << (e - self._exp)
            b = other._num << (e - other._exp)
        elif isinstance(other, (int, Fraction)) and not isinstance(other, bool):
            f = Fraction(other)
            a = self._num * f.denominator
            b = f.numerator << self._exp
        else:
            raise TypeError(f"cannot compare DyadicRational with {type(other).__name__}")
        return (a > b) - (a < b)

    def __eq__(self, other):
        try:
            return self._cmp(other) == 0
        except TypeError:
            return NotImplemented

    def __lt__(self, other):
        return self._cmp(other) < 0

    def __le__(self, other):
        return self._cmp(other) <= 0

    def __gt__(self, other):
        return self._cmp(other) > 0

    def __ge__(self, other):
        return self._cmp(other) >= 0


ZERO = DyadicRational(0)
ONE = DyadicRational(1)


def exact(value) -> Fraction:
    """Any exact quantity as a Fraction (DyadicRational, Fraction or int)."""
    if isinstance(value, DyadicRational):
        return value.to_fraction()
    if isinstance(value, float):
        raise TypeError("floating point value in an exact computation")
    return Fraction(value)


def fraction_json(value) -> list[int] | dict:
    """Serialize an exact quantity.

    Dyadic values become ``[numerator, log2_denominator]``; other rationals
    become ``{"p": .., "q": ..}``.
    """
    f = exact(value)
    d = f.denominator
    if d & (d - 1) == 0:
        return [f.numerator, d.bit_length() - 1]
    return {"p": f.numerator, "q": d}


def fraction_from_json(obj) -> Fraction:
    if isinstance(obj, (list, tuple)):
        return DyadicRational(int(obj[0]), int(obj[1])).to_fraction()
    if isinstance(obj, dict):
        return Fraction(int(obj["p"]), int(obj["q"]))
    return parse_rational(obj)
