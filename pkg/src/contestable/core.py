"""Bid algebra, deposit formulas and bid validation for the basic auction.

Quantities and units:

* prices (``value_claim``, ``p0``) are micro-units per token,
* totals (``surplus_claim``, deposits, auction parameter) are micro-units,
* token counts (``q``, ``toehold``) are whole tokens.

The freeze-out relation is kept in its dimensionally consistent form
``t_f * q * (S - P0) == R``.  Settlement only ever moves whole tokens, so the
freeze-out quantity is ``R / (S - P0)`` truncated toward zero and every deposit
is computed from that rounded quantity.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from typing import Mapping, Optional

from .money import Money, ceil_frac

DEFAULT_EPSILON = Fraction(1, 100)


class BidRejected(ValueError):
    """A bid failed validation; ``reason`` is a stable machine-readable code."""

    def __init__(self, reason: str, detail: str = ""):
        super().__init__(f"{reason}: {detail}" if detail else reason)
        self.reason = reason
        self.detail = detail


class DegenerateClaim(BidRejected):
    def __init__(self, detail: str = ""):
        super().__init__("degenerate_claim", detail)


@dataclass(frozen=True)
class BusinessPlan:
    value: Money  # per-token value V the plan reaches
    cost: Money   # total cost C

    def __post_init__(self):
        if self.cost < 0:
            raise ValueError("plan cost must be non-negative")

    def gain(self, p0: Money, q: int) -> Money:
        """Total added token value N = (V - P0) q."""
        return (self.value - p0) * q

    def surplus(self, p0: Money, q: int) -> Money:
        """Social surplus (V - P0) q - C."""
        return self.gain(p0, q) - self.cost


@dataclass(frozen=True)
class Bid:
    """The public bid triple plus who made it.

    ``toehold`` is the declared token count ``t_b * q``; the share itself is
    available through :func:`toehold_share`.
    """

    bidder: str
    value_claim: Money
    surplus_claim: Money
    toehold: int = 0


@dataclass(frozen=True)
class DepositSet:
    token_deposit: int
    value_deposit: Money
    purchase_deposit: Money
    surety_deposit: Money

    @property
    def cash_total(self) -> Money:
        return self.value_deposit + self.purchase_deposit + self.surety_deposit


@dataclass(frozen=True)
class BidVerdict:
    ok: bool
    reason: Optional[str] = None
    detail: str = ""

    def __bool__(self) -> bool:
        return self.ok


def toehold_share(bid: Bid, q: int) -> Fraction:
    return Fraction(bid.toehold, q)


def freezeout_fraction(bid: Bid, p0: Money, q: int) -> Fraction:
    """Exact freeze-out share t_f with ``t_f * q * (S - P0) == R``."""
    gain = bid.value_claim - p0
    if gain < 0:
        raise BidRejected("value_claim_below_reserve", f"S={bid.value_claim} < P0={p0}")
    if gain == 0:
        if bid.surplus_claim != 0:
            raise DegenerateClaim("S == P0 requires R == 0")
        return Fraction(0)
    return Fraction(bid.surplus_claim, gain * q)


def freezeout_tokens(bid: Bid, p0: Money, q: int) -> int:
    """Whole tokens moved by the freeze-out; negative means the bidder sells.

    Truncated toward zero, so the bidder never trades more than the claim
    covers.
    """
    t_f = freezeout_fraction(bid, p0, q)
    return int(t_f * q)


def deposit_share(bid: Bid, p0: Money, q: int) -> Fraction:
    """t_d = t_b + t_f, exact."""
    return toehold_share(bid, q) + freezeout_fraction(bid, p0, q)


def auction_parameter(bid: Bid, p0: Money, q: int) -> Money:
    """A = (1 - t_b)(S - P0) q - R, exactly.

    With whole-token toeholds the first term is an integer, so A is exact money.
    """
    freezeout_fraction(bid, p0, q)  # raises for below-reserve / degenerate bids
    return (q - bid.toehold) * (bid.value_claim - p0) - bid.surplus_claim


def auction_parameter_by_share(bid: Bid, p0: Money, q: int) -> Fraction:
    """The same parameter written as (1 - t_d)(S - P0) q."""
    return (1 - deposit_share(bid, p0, q)) * (bid.value_claim - p0) * q


def effective_deposit_tokens(bid: Bid, p0: Money, q: int) -> int:
    """Token deposit after a whole-token freeze-out (t_d q rounded)."""
    return bid.toehold + freezeout_tokens(bid, p0, q)


def guaranteed_gain(bid: Bid, p0: Money, q: int) -> Money:
    """(1 - t_d)(S - P0) q on the whole tokens actually left with holders."""
    return (q - effective_deposit_tokens(bid, p0, q)) * (bid.value_claim - p0)


def required_deposits(
    bid: Bid,
    p0: Money,
    q: int,
    gamma: Fraction = Fraction(0),
    epsilon: Fraction = DEFAULT_EPSILON,
    flush_sale: bool = False,
) -> DepositSet:
    """Token, value, purchase and surety deposits for a bid in the standard case.

    The value deposit is ``(1 - t_d)(S - P0) q (1 + epsilon)`` rounded up, and
    never less than one micro-unit above the bound so the inequality stays
    strict even at zero gain.  Under the flush-sale variant the purchase
    deposit must buy every undeclared token at ``P0``.
    """
    if gamma > 1:
        raise ValueError("gamma must be <= 1")
    if epsilon < 0:
        raise ValueError("epsilon must be >= 0")
    moved = freezeout_tokens(bid, p0, q)
    bound = guaranteed_gain(bid, p0, q)
    value = max(ceil_frac(bound * (1 + epsilon)), bound + 1) if epsilon > 0 else bound + 1
    purchase = (q - bid.toehold) * p0 if flush_sale else max(moved, 0) * p0
    surety = max(ceil_frac((1 - gamma) * p0 * q) - value, 0)
    return DepositSet(
        token_deposit=bid.toehold + moved,
        value_deposit=value,
        purchase_deposit=purchase,
        surety_deposit=surety,
    )


def validate_bid(
    bid: Bid,
    p0: Money,
    q: int,
    t_m: Fraction,
    *,
    gamma: Fraction = Fraction(0),
    epsilon: Fraction = DEFAULT_EPSILON,
    cash: Optional[Money] = None,
    tokens: Optional[int] = None,
    flush_sale: bool = False,
) -> BidVerdict:
    """Check every admission rule; the first violated rule names the verdict.

    ``cash``/``tokens`` are what the bidder can post; when omitted the funding
    checks are skipped.
    """
    gain = bid.value_claim - p0
    if gain < 0:
        return BidVerdict(False, "value_claim_below_reserve", f"S < P0 by {-gain}")
    if not 0 <= bid.toehold <= q:
        return BidVerdict(False, "invalid_toehold", f"toehold {bid.toehold} outside [0, {q}]")
    if gain == 0 and bid.surplus_claim != 0:
        return BidVerdict(False, "degenerate_claim", "S == P0 requires R == 0")
    t_b = toehold_share(bid, q)
    t_d = deposit_share(bid, p0, q)
    if t_d > t_m:
        return BidVerdict(False, "market_size", f"t_d={t_d} > t_m={t_m}")
    if bid.surplus_claim > (t_m - t_b) * gain * q:
        return BidVerdict(False, "surplus_claim_cap", f"R above (t_m - t_b)(S - P0)q")
    if bid.surplus_claim < 0 and -freezeout_fraction(bid, p0, q) > t_b:
        return BidVerdict(False, "negative_freezeout_exceeds_toehold", "|t_f| > t_b")
    if tokens is not None and tokens < bid.toehold:
        return BidVerdict(False, "insufficient_toehold", f"holds {tokens} < declared {bid.toehold}")
    if cash is not None:
        need = required_deposits(bid, p0, q, gamma, epsilon, flush_sale).cash_total
        if cash < need:
            return BidVerdict(False, "underfunded_deposits", f"needs {need}, has {cash}")
    return BidVerdict(True)


def check_bid(bid: Bid, p0: Money, q: int, t_m: Fraction, **kwargs) -> None:
    verdict = validate_bid(bid, p0, q, t_m, **kwargs)
    if not verdict:
        raise BidRejected(verdict.reason, verdict.detail)


@dataclass
class HolderRegistry:
    """Token holdings by holder id; the total is fixed at ``q``."""

    holdings: dict[str, int] = field(default_factory=dict)

    @property
    def total(self) -> int:
        return sum(self.holdings.values())

    def snapshot(self) -> dict[str, int]:
        return {k: v for k, v in sorted(self.holdings.items()) if v}

    def move(self, src: str, dst: str, n: int) -> None:
        if n < 0 or self.holdings.get(src, 0) < n:
            raise ValueError(f"{src} cannot release {n} tokens")
        self.holdings[src] -= n
        self.holdings[dst] = self.holdings.get(dst, 0) + n


@dataclass(frozen=True)
class AuctionRecord:
    """Everything fixed at the close of a basic auction."""

    auction_id: str
    t0: int
    t1: int
    p0: Money
    q: int
    bid: Bid
    clearing: Money          # winning auction parameter A
    second_best: Money       # A2*, or 0 with a single bidder
    deposits: DepositSet
    t_f: Fraction
    t_d: Fraction
    t1_holders: Mapping[str, int] = field(default_factory=dict)

    @property
    def winner(self) -> str:
        return self.bid.bidder

    @property
    def value_claim(self) -> Money:
        return self.bid.value_claim
