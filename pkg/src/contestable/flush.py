"""Flush-sale variant of the closing steps.

Instead of a pro-rata freeze-out the winner buys every token it did not
declare at ``P0`` (concealed positions included), keeps its freeze-out share
in the token deposit and the DAO re-auctions the rest to registered buyers.
Revenue up to ``P0`` per token reimburses the winner; anything above is
surplus for the registered T1 holders, anything below is a DAO liability.
"""
from __future__ import annotations

import random
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Mapping, Optional, Sequence

from .core import AuctionRecord, freezeout_tokens
from .engine import VotePool
from .ledger import BURN, CASH, MARKET_MAKER, TOKEN, TREASURY, WORLD, Book, Move, escrow
from .money import Money, allocate, to_micros


def revised_purchase_deposit(toehold: int, p0: Money, q: int) -> Money:
    """(1 - t_b) q P0: enough to buy every undeclared token."""
    return (q - toehold) * p0


@dataclass(frozen=True)
class RegistrationPredicate:
    registered: frozenset = frozenset()
    restricted: frozenset = frozenset()
    everyone: bool = False

    def eligible(self, party: str) -> bool:
        if party in self.restricted:
            return False
        return self.everyone or party in self.registered

    def restrict(self, *parties: str) -> "RegistrationPredicate":
        return RegistrationPredicate(self.registered, self.restricted | frozenset(parties), self.everyone)


@dataclass(frozen=True)
class Order:
    bidder: str
    quantity: int
    limit: Money


def linear_demand(intercept: Money, slope: Money, quantity: int, bidders: int = 10,
                  prefix: str = "buyer") -> list[Order]:
    """One-token orders whose ``k``-th limit is ``intercept - slope k``.

    The uniform clearing price for ``n`` tokens is ``intercept - slope (n - 1)``.
    """
    return [Order(f"{prefix}{k % bidders}", 1, intercept - slope * k) for k in range(quantity)]


@dataclass(frozen=True)
class TokenAuctionResult:
    clearing: Money
    quantity: int
    allocations: Mapping[str, int]
    p0: Money
    market_maker: int = 0

    @property
    def surplus(self) -> Money:
        """Positive surplus or negative deficit against P0."""
        return (self.clearing - self.p0) * self.quantity

    @property
    def revenue(self) -> Money:
        return self.clearing * self.quantity


def run_token_auction(quantity: int, orders: Sequence[Order], registration: RegistrationPredicate,
                      p0: Money, fallback: Optional[Money] = None) -> TokenAuctionResult:
    """Uniform-price sale of ``quantity`` tokens.

    Eligible orders fill by descending limit, then submission order.  The price
    is the lowest accepted limit, which is the highest price that sells the
    whole quantity.  Unfilled tokens go to the market maker at ``fallback``,
    which then sets the uniform price.
    """
    if quantity < 0:
        raise ValueError("quantity must be non-negative")
    ranked = sorted(((o, i) for i, o in enumerate(orders) if registration.eligible(o.bidder)
                     and o.quantity > 0 and o.limit > 0), key=lambda t: (-t[0].limit, t[1]))
    alloc: dict[str, int] = {}
    left = quantity
    price = None
    for o, _ in ranked:
        if left == 0:
            break
        n = min(o.quantity, left)
        alloc[o.bidder] = alloc.get(o.bidder, 0) + n
        left -= n
        price = o.limit
    mm = 0
    if left:
        fb = p0 if fallback is None else fallback
        price = fb if price is None else min(price, fb)
        mm = left
        alloc[MARKET_MAKER] = alloc.get(MARKET_MAKER, 0) + mm
    if price is None:
        price = p0
    return TokenAuctionResult(price, quantity, dict(sorted(alloc.items())), p0, mm)


@dataclass
class FlushResult:
    t1_holders: dict[str, int]
    bought: dict[str, int]
    burned: dict[str, int]
    auction: TokenAuctionResult
    entitled: dict[str, int]
    pool: VotePool
    surplus_account: str
    redirected: Money = 0
    undistributed: Money = 0
    payouts: dict[str, int] = field(default_factory=dict)


def run_flush_sale(book: Book, record: AuctionRecord, tick: int, *, orders: Sequence[Order],
                   registration: RegistrationPredicate, concealed: Optional[Mapping[str, int]] = None,
                   bounty_prob: float = 0.0, rng: Optional[random.Random] = None,
                   fallback: Optional[Money] = None, liquidity_redirect: bool = False,
                   t_m=None, distribute: bool = True, q_t: Optional[int] = None,
                   pool_target=None, pool_supermajority: bool = False) -> FlushResult:
    """Flush-sale closing: buy out, deposit the freeze-out share, re-auction the rest."""
    aid, winner, q, p0 = record.auction_id, record.winner, record.q, record.p0
    purchase = escrow(aid, winner, "purchase")
    tok = escrow(aid, winner, "token")
    pool_acct = f"dao/flush/{aid}"
    snapshot = book.holders()
    if sum(snapshot.values()) + book.balance(tok, TOKEN) != q - book.balance(BURN, TOKEN):
        raise ValueError("registry does not hold q tokens outside other escrows")
    book.post(tick, "t1_snapshot", cause="closing step 1", info={"auction": aid, "holders": snapshot})

    burned: dict[str, int] = {}
    if concealed and bounty_prob > 0:
        r = rng or random.Random(0)
        for party, n in sorted(concealed.items()):
            n = min(n, snapshot.get(party, 0))
            if n and r.random() < bounty_prob:
                burned[party] = n
        if burned:
            book.post(tick, "bounty_burn", [Move(p, BURN, TOKEN, n) for p, n in burned.items()],
                      cause="concealed position detected", info={"auction": aid, "burned": burned})

    bought = {h: n - burned.get(h, 0) for h, n in snapshot.items() if n - burned.get(h, 0) > 0}
    moves = []
    for h, n in bought.items():
        moves.append(Move(h, pool_acct, TOKEN, n))
        moves.append(Move(purchase, h, CASH, n * p0))
    hidden = {h: n for h, n in (concealed or {}).items() if h in bought}
    book.post(tick, "flush_sale", moves, cause="flush step 2",
              info={"auction": aid, "price": p0, "sellers": bought, "concealed_sold": hidden})
    leftover = book.balance(purchase, CASH)

    moved = max(freezeout_tokens(record.bid, p0, q), 0)
    moved = min(moved, book.balance(pool_acct, TOKEN))
    book.transfer(tick, "flush_deposit", pool_acct, tok, TOKEN, moved, cause="flush step 3",
                  info={"auction": aid, "tokens": moved})
    quantity = book.balance(pool_acct, TOKEN)
    reg = registration.restrict(winner)
    result = run_token_auction(quantity, orders, reg, p0, fallback)

    moves = []
    for buyer, n in result.allocations.items():
        cost = n * result.clearing
        moves.append(Move(WORLD, buyer, CASH, cost))  # outside buyers bring fresh cash
        moves.append(Move(buyer, pool_acct, CASH, cost))
        moves.append(Move(pool_acct, buyer, TOKEN, n))
    book.post(tick, "token_auction", moves, cause="flush step 4",
              info={"auction": aid, "clearing": result.clearing, "quantity": quantity,
                    "allocations": result.allocations, "market_maker": result.market_maker})

    # reimburse the winner at P0 for every re-auctioned token plus any unused deposit
    reimburse = quantity * p0
    shortfall = max(reimburse - book.balance(pool_acct, CASH), 0)
    moves = []
    if shortfall:
        moves.append(Move(TREASURY, pool_acct, CASH, shortfall))
    moves.append(Move(pool_acct, winner, CASH, reimburse))
    moves.append(Move(purchase, winner, CASH, leftover))
    book.post(tick, "flush_reimburse", moves, cause="flush step 6",
              info={"auction": aid, "reimbursed": reimburse, "deficit": shortfall,
                    "unused_deposit": leftover})

    redirected = 0
    surplus = book.balance(pool_acct, CASH)
    if liquidity_redirect and surplus > 0 and t_m is not None and record.t_d == t_m:
        floor = (1 - Fraction(t_m)) * (record.value_claim - p0) * q
        redirected = min(surplus, int(floor))
        book.transfer(tick, "surplus_redirect", pool_acct, winner, CASH, redirected,
                      cause="liquidity redirect", info={"auction": aid, "amount": redirected})

    t1_weights = {h: n for h, n in snapshot.items() if h != winner}
    out = FlushResult(snapshot, bought, burned, result, t1_weights,
                      VotePool(book.balance(tok, TOKEN), q if q_t is None else q_t,
                               pool_target if pool_target is not None else Fraction(1, 2),
                               pool_supermajority),
                      pool_acct, redirected)
    if distribute:
        distribute_token_auction_surplus(book, out, reg, tick)
    book.post(tick, "vote_pool", cause="closing step 4",
              info={"auction": aid, "control_tokens": out.pool.control_tokens, "q_T": out.pool.q_t,
                    "extra_votes": out.pool.extra})
    return out


def distribute_token_auction_surplus(book: Book, flush: FlushResult, registration: RegistrationPredicate,
                                     tick: int) -> dict[str, int]:
    """Split the held surplus over registered T1 holders by T1 holdings."""
    acct = flush.surplus_account
    amount = book.balance(acct, CASH)
    weights = {h: n for h, n in flush.t1_holders.items() if registration.eligible(h)}
    if amount <= 0:
        return {}
    if not weights:
        book.post(tick, "surplus_held", cause="no registered holders",
                  info={"account": acct, "amount": amount})
        flush.undistributed = amount
        return {}
    parts = allocate(amount, weights)
    book.post(tick, "surplus_distribution", [Move(acct, h, CASH, n) for h, n in parts.items()],
              cause="flush step 6", info={"account": acct, "shares": parts})
    flush.payouts = {h: n for h, n in parts.items() if n}
    return flush.payouts


def orders_from_config(spec: Mapping, quantity: int) -> list[Order]:
    kind = spec.get("kind", "linear")
    if kind == "linear":
        return linear_demand(to_micros(str(spec["intercept"])), to_micros(str(spec["slope"])),
                             max(quantity, int(spec.get("depth", quantity))), int(spec.get("bidders", 10)))
    if kind == "orders":
        return [Order(o["bidder"], int(o["quantity"]), to_micros(str(o["limit"]))) for o in spec["orders"]]
    raise ValueError(f"unknown demand kind {kind!r}")


def registration_from_config(spec: Optional[Mapping], holders: Iterable[str]) -> RegistrationPredicate:
    if not spec:
        return RegistrationPredicate(everyone=True)
    if spec.get("all", False):
        reg = RegistrationPredicate(everyone=True)
    else:
        reg = RegistrationPredicate(frozenset(spec.get("registered", ())))
    return reg.restrict(*spec.get("restricted", ()))
