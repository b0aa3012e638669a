"""Exact rationals and naturals extended with a single infinity.

Rationals are :class:`fractions.Fraction`; they are always stored reduced and
backed by Python's arbitrary-precision integers, so long exact runs never
overflow.  Extended naturals are plain ``int`` values plus the :data:`INF`
sentinel.
"""

from __future__ import annotations

from fractions import Fraction
from typing import Union

Rational = Fraction


class _Infinity:
    """The single infinite extended natural (``omega``)."""

    _instance = None

    def __new__(cls):
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __repr__(self):
        return "INF"

    def __str__(self):
        return "inf"

    def __reduce__(self):
        return (_Infinity, ())

    def __hash__(self):
        return hash("rtt_forge.INF")

    def __eq__(self, other):
        return other is self

    def __lt__(self, other):
        return False

    def __le__(self, other):
        return other is self

    def __gt__(self, other):
        if other is self:
            return False
        if isinstance(other, int):
            return True
        return NotImplemented

    def __ge__(self, other):
        return other is self or isinstance(other, int)


INF = _Infinity()

ExtNat = Union[int, _Infinity]


def is_ext_nat(x) -> bool:
    return x is INF or (isinstance(x, int) and not isinstance(x, bool) and x >= 0)


def ext_add(a: ExtNat, b: ExtNat) -> ExtNat:
    if a is INF or b is INF:
        return INF
    return a + b


def ext_pred(a: ExtNat) -> ExtNat:
    if a is INF:
        return INF
    if a == 0:
        raise ValueError("predecessor of zero is undefined")
    return a - 1


def qpow(base: Fraction, exp: int) -> Fraction:
    if exp < 0:
        raise ValueError("exponent must be a natural number")
    return Fraction(base) ** exp


def to_rational(value) -> Fraction:
    """Coerce ints, Fractions and strings such as ``"135/2"`` or ``"67.5"``."""
    if isinstance(value, Fraction):
        return value
    if isinstance(value, bool):
        raise TypeError("booleans are not rationals")
    if isinstance(value, int):
        return Fraction(value)
    if isinstance(value, str):
        return Fraction(value.strip())
    if isinstance(value, float):
        raise TypeError("floats are not accepted; pass a string or Fraction")
    raise TypeError(f"cannot convert {value!r} to a rational")


def format_rational(q: Fraction) -> str:
    q = Fraction(q)
    return f"{q.numerator}/{q.denominator}"


def format_decimal(q: Fraction, digits: int = 12) -> str:
    return f"{float(q):.{digits}g}"


def format_ext(x: ExtNat) -> str:
    return "inf" if x is INF else str(x)


def parse_ext(text: str) -> ExtNat:
    text = text.strip()
    if text.lower() in ("inf", "infinity", "omega"):
        return INF
    n = int(text)
    if n < 0:
        raise ValueError(f"extended naturals are non-negative: {text}")
    return n
