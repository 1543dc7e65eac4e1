"""Exact fixed-point money.

Amounts are plain ``int`` counts of micro-units (10**-6 of the reference fiat
currency).  Per-token prices use the same unit, so ``price * tokens`` is a total
amount without any rescaling.  Rational parameters (shares, epsilon, gamma) are
``fractions.Fraction`` and only ever meet money through the explicit rounding
helpers below.
"""
from __future__ import annotations

import math
from decimal import Decimal, InvalidOperation
from fractions import Fraction
from typing import Hashable, Mapping, TypeVar, Union

SCALE = 1_000_000

Money = int
K = TypeVar("K", bound=Hashable)


class MoneyError(ValueError):
    pass


def to_micros(value: Union[int, str, Decimal, Fraction]) -> Money:
    """Convert a fiat amount to micro-units, refusing anything inexact.

    Strings are parsed as decimals (``"3787.5"``) or ratios (``"1/4"``).
    Ints are taken as whole fiat units.

    >>> to_micros("3787.5")
    3787500000
    >>> to_micros(10)
    10000000
    """
    if isinstance(value, bool):
        raise MoneyError(f"not an amount: {value!r}")
    if isinstance(value, int):
        return value * SCALE
    if isinstance(value, str):
        text = value.strip().replace("_", "")
        if "/" in text:
            value = Fraction(text)
        else:
            try:
                value = Decimal(text)
            except InvalidOperation as exc:
                raise MoneyError(f"not an amount: {text!r}") from exc
    if isinstance(value, Decimal):
        value = Fraction(value)
    if isinstance(value, Fraction):
        scaled = value * SCALE
        if scaled.denominator != 1:
            raise MoneyError(f"{value} is finer than one micro-unit")
        return int(scaled)
    raise MoneyError(f"not an amount: {value!r}")


def fmt(micros: Money) -> str:
    """Render micro-units as a plain decimal string without trailing zeros.

    >>> fmt(2250000001)
    '2250.000001'
    >>> fmt(-500000)
    '-0.5'
    """
    sign = "-" if micros < 0 else ""
    whole, frac = divmod(abs(micros), SCALE)
    if not frac:
        return f"{sign}{whole}"
    return f"{sign}{whole}.{frac:06d}".rstrip("0")


def ceil_frac(x: Fraction) -> int:
    return -((-x.numerator) // x.denominator)


def floor_frac(x: Fraction) -> int:
    return x.numerator // x.denominator


def as_fraction(value: Union[int, str, float, Fraction]) -> Fraction:
    """Parse a share such as ``"1/20"``, ``"0.05"`` or ``Fraction(1, 20)``.

    Floats are accepted only through their shortest decimal repr, so ``0.6``
    becomes exactly 3/5.
    """
    if isinstance(value, Fraction):
        return value
    if isinstance(value, bool):
        raise MoneyError(f"not a fraction: {value!r}")
    if isinstance(value, int):
        return Fraction(value)
    if isinstance(value, float):
        if not math.isfinite(value):
            raise MoneyError(f"not a fraction: {value!r}")
        return Fraction(repr(value))
    if isinstance(value, str):
        try:
            return Fraction(value.strip())
        except ValueError as exc:
            raise MoneyError(f"not a fraction: {value!r}") from exc
    raise MoneyError(f"not a fraction: {value!r}")


def allocate(total: int, weights: Mapping[K, int]) -> dict[K, int]:
    """Split ``total`` pro rata to non-negative integer ``weights``.

    Largest-remainder method: everybody gets the floor of their exact share and
    the leftover units go one each to the largest fractional remainders, ties
    broken by ascending key.  The parts always sum to ``total`` exactly.

    >>> allocate(10, {"a": 1, "b": 1, "c": 1})
    {'a': 4, 'b': 3, 'c': 3}
    """
    if total < 0:
        parts = allocate(-total, weights)
        return {k: -v for k, v in parts.items()}
    keys = sorted(weights)
    if any(weights[k] < 0 for k in keys):
        raise MoneyError("allocation weights must be non-negative")
    denom = sum(weights[k] for k in keys)
    if denom == 0:
        if total:
            raise MoneyError("cannot allocate a non-zero total over zero weight")
        return {k: 0 for k in keys}
    parts = {}
    remainders = []
    for k in keys:
        q, r = divmod(total * weights[k], denom)
        parts[k] = q
        remainders.append((-r, k))
    leftover = total - sum(parts.values())
    remainders.sort()
    for _, k in remainders[:leftover]:
        parts[k] += 1
    return parts
