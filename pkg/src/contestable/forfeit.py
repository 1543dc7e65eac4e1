"""Value-deposit forfeits, the transitional forfeit and surety settlement.

The forfeit on a value deposit ``D_v`` given an end-of-control reference price
``X`` is piecewise:

* nothing when ``X > S``,
* ``(1 - t_d)(S - X) q + delta(S, X)`` on ``[P0, S]``,
* the whole deposit when ``X < P0``,

always clamped into ``[0, D_v]``.  ``delta`` is a pluggable profile; the
standard profile is a constant single micro-unit.
"""
from __future__ import annotations

import random
from dataclasses import dataclass, replace
from fractions import Fraction
from typing import Any, Mapping

import numpy as np

from .money import Money, to_micros


class ProfileError(ValueError):
    pass


@dataclass(frozen=True)
class ConstantDelta:
    micros: int = 1

    def __call__(self, s, x):
        if isinstance(x, np.ndarray) or isinstance(s, np.ndarray):
            return np.full(np.broadcast(s, x).shape, self.micros, dtype=np.int64)
        return self.micros


@dataclass(frozen=True)
class LinearDelta:
    """``base + slope * (S - X)`` micro-units; slope is a plain ratio."""

    base: int = 1
    slope: Fraction = Fraction(0)

    def __call__(self, s, x):
        if isinstance(x, np.ndarray) or isinstance(s, np.ndarray):
            gap = np.asarray(s - x, dtype=np.int64)
            return self.base + (gap * self.slope.numerator) // self.slope.denominator
        return self.base + int((s - x) * self.slope)


@dataclass(frozen=True)
class BandDelta:
    """Extra forfeit ``bonus`` inside ``[lo, hi]`` on top of ``base``.

    A deliberately non-monotone profile of the kind the designer is allowed to
    choose; used to exercise the monotonicity check.
    """

    base: int = 1
    bonus: int = 0
    lo: Money = 0
    hi: Money = 0

    def __call__(self, s, x):
        if isinstance(x, np.ndarray) or isinstance(s, np.ndarray):
            x = np.broadcast_to(x, np.broadcast(s, x).shape)
            inside = (x >= self.lo) & (x <= self.hi)
            return self.base + np.where(inside, self.bonus, 0)
        return self.base + (self.bonus if self.lo <= x <= self.hi else 0)


STANDARD_DELTA = ConstantDelta(1)


def delta_from_config(spec: Mapping[str, Any]):
    kind = spec.get("kind", "constant")
    if kind == "constant":
        return ConstantDelta(int(spec.get("micros", 1)))
    if kind == "linear":
        return LinearDelta(int(spec.get("base", 1)), Fraction(str(spec.get("slope", 0))))
    if kind == "band":
        return BandDelta(
            int(spec.get("base", 1)),
            int(spec.get("bonus", 0)),
            to_micros(str(spec["lo"])),
            to_micros(str(spec["hi"])),
        )
    raise ProfileError(f"unknown delta profile kind {kind!r}")


def check_delta_profile(delta, *, pairs: int = 64, points: int = 1000, seed: int = 0,
                        q: int = 1000, require_monotone: bool = False) -> None:
    """Reject a profile that is not strictly positive on ``[P0, S]``.

    Randomized ``(P0, S)`` pairs, each probed on a ``points``-point grid.  With
    ``require_monotone`` the forfeit must also be non-increasing in ``X`` and
    non-increasing as ``S`` falls, which the transitional credit relies on.
    """
    rng = random.Random(seed)
    for _ in range(pairs):
        p0 = rng.randint(1, 100) * 1_000_000
        s = p0 + rng.randint(1, 100 * 1_000_000)
        xs = np.unique(np.linspace(p0, s, points).astype(np.int64))
        d = np.asarray(delta(s, xs))
        if (d <= 0).any():
            bad = int(xs[np.argmax(d <= 0)])
            raise ProfileError(f"delta(S={s}, X={bad}) <= 0 violates the no-overclaim condition")
        if require_monotone:
            retained = q // 2
            phi = retained * (s - xs) + d
            if (np.diff(phi) > 0).any():
                raise ProfileError("forfeit is not monotone in X on [P0, S]")
            s_lower = p0 + (s - p0) // 2
            lower_xs = xs[xs <= s_lower]
            phi_low = retained * (s_lower - lower_xs) + np.asarray(delta(s_lower, lower_xs))
            if (phi_low > phi[: len(lower_xs)]).any():
                raise ProfileError("forfeit is not monotone in S")


@dataclass(frozen=True)
class ForfeitParams:
    value_deposit: Money
    p0: Money
    value_claim: Money
    retained: int  # (1 - t_d) q as whole tokens left with holders
    delta: Any = STANDARD_DELTA

    def with_claim(self, value_claim: Money) -> "ForfeitParams":
        return replace(self, value_claim=value_claim)


@dataclass(frozen=True)
class SettlementOutcome:
    forfeit_to_holders: Money
    refund_to_control: Money


def forfeit_amount(fp: ForfeitParams, x: Money, *, clamp: bool = True) -> Money:
    s = fp.value_claim
    if x > s:
        raw = 0
    elif x >= fp.p0:
        raw = fp.retained * (s - x) + int(fp.delta(s, x))
    else:
        raw = fp.value_deposit
    if clamp:
        return min(max(raw, 0), fp.value_deposit)
    return raw


def value_forfeit(fp: ForfeitParams, x: Money) -> SettlementOutcome:
    f = forfeit_amount(fp, x)
    return SettlementOutcome(f, fp.value_deposit - f)


def baseline_loss_penalty(fp: ForfeitParams) -> Money:
    """D_v - (1 - t_d)(S - P0) q: the jump in the forfeit just below P0."""
    return max(fp.value_deposit - fp.retained * (fp.value_claim - fp.p0), 0)


def forfeit_differential(fp: ForfeitParams, s_w: Money, x: Money) -> Money:
    """Positive part of forfeit(S, X) - forfeit(S_w, X) on the same deposit."""
    return max(forfeit_amount(fp, x) - forfeit_amount(fp.with_claim(s_w), x), 0)


def transitional_case(p0: Money, s_w: Money, p_ref: Money) -> int:
    """Which branch of the transitional forfeit applies (1, 2 or 3).

    The synthetic ``S_w == P_ref < P0`` of abandonment and bidless periodic
    auctions falls in the full-forfeit branch.
    """
    if p_ref >= p0:
        return 1
    if s_w < p0:
        return 2
    return 3


def transitional_forfeit(fp: ForfeitParams, s_w: Money, p_ref: Money) -> SettlementOutcome:
    case = transitional_case(fp.p0, s_w, p_ref)
    if case == 1:
        f = forfeit_differential(fp, s_w, p_ref)
    elif case == 2:
        f = fp.value_deposit
    else:
        f = forfeit_differential(fp, s_w, fp.p0)
    f = min(f, fp.value_deposit)
    return SettlementOutcome(f, fp.value_deposit - f)


@dataclass(frozen=True)
class Shortfalls:
    value: Money      # H
    adjusted: Money   # H*
    bid: Money        # B


def shortfalls(d_v: Money, p0: Money, p0_w: Money, s_w: Money, q: int) -> Shortfalls:
    h = max((p0 - p0_w) * q, 0)
    return Shortfalls(h, max(h - d_v, 0), max((p0 - s_w) * q, 0))


def surety_settlement(d_s: Money, d_v: Money, p0: Money, p0_w: Money, s_w: Money,
                      q: int) -> tuple[Money, Money]:
    """Return ``(returned, forfeited)`` for the previous surety deposit."""
    sf = shortfalls(d_v, p0, p0_w, s_w, q)
    returned = max(d_s - sf.bid, d_s - sf.adjusted, 0)
    return returned, d_s - returned
