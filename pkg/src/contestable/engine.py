"""English auction ascending in the auction parameter, and the closing steps.

The clock runs on ``A``.  Each bidder enters with its strongest level ``A*``
and stays in until the clock passes it; exit is irrevocable.  Because exits
are known in advance the clock jumps straight from one exit to the next
instead of stepping through every increment.

Once the last rival drops out the winner stands at its strongest bid.  With
the surplus-capture option on it then raises its surplus claim, lowering ``A``
to one increment above the runner-up, but never below the floor its
admissible claims allow.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from fractions import Fraction
from typing import Mapping, Optional, Protocol, Sequence

from .core import (
    AuctionRecord,
    Bid,
    BidRejected,
    DEFAULT_EPSILON,
    DepositSet,
    auction_parameter,
    deposit_share,
    freezeout_fraction,
    freezeout_tokens,
    required_deposits,
    validate_bid,
)
from .ledger import CASH, MARKET_MAKER, TOKEN, Book, Move, escrow
from .money import Money, allocate, floor_frac

CAP_RULES = ("market_size", "net_of_toehold")


@dataclass(frozen=True)
class AuctionContext:
    p0: Money
    q: int
    t_m: Fraction
    gamma: Fraction = Fraction(0)
    epsilon: Fraction = DEFAULT_EPSILON
    increment: Optional[Money] = None
    r_raise: bool = True
    cap_rule: str = "market_size"
    flush_sale: bool = False
    # tokens already locked in a previous escrow that count toward a toehold
    locked_tokens: Mapping[str, int] = field(default_factory=dict)

    @property
    def step(self) -> Money:
        return self.q if self.increment is None else self.increment


class Bidder(Protocol):
    bidder_id: str
    arrival: int

    def max_level(self, ctx: AuctionContext) -> Optional[Money]: ...

    def bid_at(self, level: Money, ctx: AuctionContext) -> Bid: ...

    def floor_level(self, ctx: AuctionContext) -> Money: ...


@dataclass
class Entry:
    bidder: Bidder
    level: Money
    bid: Bid
    deposits: DepositSet
    arrival: int


@dataclass
class AuctionState:
    auction_id: str
    t0: int
    t1: int
    ctx: AuctionContext
    entries: dict[str, Entry] = field(default_factory=dict)
    periodic: bool = False

    @property
    def p0(self) -> Money:
        return self.ctx.p0

    @property
    def q(self) -> int:
        return self.ctx.q


@dataclass(frozen=True)
class VotePool:
    """Empty votes that keep the control party at a strict majority."""

    control_tokens: int
    q_t: int
    target: Fraction = Fraction(1, 2)
    counts_for_supermajority: bool = False

    @property
    def extra(self) -> int:
        if self.target == Fraction(1, 2):
            return max(self.q_t - 2 * self.control_tokens + 1, 0)
        need = (self.target * self.q_t - self.control_tokens) / (1 - self.target)
        return max(floor_frac(need) + 1, 0)

    @property
    def control_votes(self) -> int:
        return self.control_tokens + self.extra

    def majority_ok(self) -> bool:
        return self.control_votes > self.target * (self.q_t + self.extra)


def vote_pool_resize(pool: VotePool, q_t: int) -> VotePool:
    if q_t < 0:
        raise ValueError("turnout cannot be negative")
    return replace(pool, q_t=q_t)


def _available(book: Book, party: str, ctx: AuctionContext) -> tuple[Money, int]:
    return book.balance(party, CASH), book.balance(party, TOKEN) + ctx.locked_tokens.get(party, 0)


def _escrow_moves(aid: str, party: str, bid: Bid, dep: DepositSet, ctx: AuctionContext,
                  reverse: bool = False) -> list[Move]:
    legs = [
        ("value", CASH, dep.value_deposit),
        ("purchase", CASH, dep.purchase_deposit),
        ("surety", CASH, dep.surety_deposit),
    ]
    tokens = bid.toehold - ctx.locked_tokens.get(party, 0)
    if tokens > 0:
        legs.append(("token", TOKEN, tokens))
    moves = []
    for kind, asset, amount in legs:
        acct = escrow(aid, party, kind)
        moves.append(Move(acct, party, asset, amount) if reverse else Move(party, acct, asset, amount))
    return moves


def _deposits(bid: Bid, ctx: AuctionContext) -> DepositSet:
    return required_deposits(bid, ctx.p0, ctx.q, ctx.gamma, ctx.epsilon, ctx.flush_sale)


def _qualify(book: Book, ctx: AuctionContext, bidder: Bidder, level: Money) -> tuple[Bid, DepositSet]:
    bid = bidder.bid_at(level, ctx)
    cash, tokens = _available(book, bidder.bidder_id, ctx)
    verdict = validate_bid(bid, ctx.p0, ctx.q, ctx.t_m, gamma=ctx.gamma, epsilon=ctx.epsilon,
                           cash=cash, tokens=tokens, flush_sale=ctx.flush_sale)
    if not verdict:
        raise BidRejected(verdict.reason, verdict.detail)
    return bid, _deposits(bid, ctx)


def open_auction(book: Book, ctx: AuctionContext, initiator: Bidder, now: int, *,
                 auction_ticks: int = 7, auction_id: str = "a0",
                 periodic: bool = False) -> AuctionState:
    """Open a basic auction at reserve ``ctx.p0``; the initiator must qualify."""
    state = AuctionState(auction_id, now, now + auction_ticks, ctx, periodic=periodic)
    if initiator is not None:
        submit(book, state, initiator, now)
    book.post(now, "auction_open", cause="auction open",
              info={"auction": auction_id, "p0": ctx.p0, "deadline": state.t1,
                    "initiator": getattr(initiator, "bidder_id", None), "periodic": periodic})
    return state


def submit(book: Book, state: AuctionState, bidder: Bidder, now: int) -> Entry:
    """Enter a bidder at its strongest level and escrow the deposits for it."""
    ctx = state.ctx
    bid_id = bidder.bidder_id
    if bid_id in state.entries:
        raise BidRejected("duplicate_bidder", bid_id)
    level = bidder.max_level(ctx)
    if level is None:
        raise BidRejected("no_bid", bid_id)
    bid, dep = _qualify(book, ctx, bidder, level)
    entry = Entry(bidder, auction_parameter(bid, ctx.p0, ctx.q), bid, dep, bidder.arrival)
    book.post(now, "bid", _escrow_moves(state.auction_id, bid_id, bid, dep, ctx),
              cause="bid escrow",
              info={"auction": state.auction_id, "bidder": bid_id, "level": entry.level,
                    "S": bid.value_claim, "R": bid.surplus_claim, "toehold": bid.toehold})
    state.entries[bid_id] = entry
    return entry


def try_submit(book: Book, state: AuctionState, bidder: Bidder, now: int) -> Optional[Entry]:
    try:
        return submit(book, state, bidder, now)
    except BidRejected as exc:
        book.post(now, "bid_rejected", cause="bid validation",
                  info={"auction": state.auction_id, "bidder": bidder.bidder_id,
                        "reason": exc.reason, "detail": exc.detail})
        return None


@dataclass
class AuctionOutcome:
    record: Optional[AuctionRecord]
    ranking: list[tuple[str, Money]]
    raise_amount: Money = 0
    void: bool = False


def surplus_raise(a1: Money, a2: Optional[Money], floor: Money, step: Money) -> Money:
    """How far the winner lowers ``A`` below its strongest level."""
    target = floor if a2 is None else max(a2 + step, floor)
    return max(a1 - target, 0)


def run_english_auction(book: Book, state: AuctionState, now: int,
                        t1_holders: Optional[Mapping[str, int]] = None) -> AuctionOutcome:
    """Clear the auction: highest ``A*`` wins, earliest arrival on ties."""
    ctx = state.ctx
    aid = state.auction_id
    order = sorted(state.entries.values(), key=lambda e: (-e.level, e.arrival, e.bid.bidder))
    ranking = [(e.bid.bidder, e.level) for e in order]
    if not order:
        book.post(now, "auction_void", cause="no valid bids", info={"auction": aid})
        return AuctionOutcome(None, [], void=True)

    # clock jumps to each exit, lowest first
    for e in reversed(order[1:]):
        book.post(now, "bid_exit", _escrow_moves(aid, e.bid.bidder, e.bid, e.deposits, ctx, reverse=True),
                  cause="auction exit", info={"auction": aid, "bidder": e.bid.bidder, "level": e.level})

    win = order[0]
    a1 = win.level
    a2 = order[1].level if len(order) > 1 else None
    final_bid, final_dep, level = win.bid, win.deposits, a1
    raised = 0
    if ctx.r_raise:
        floor = win.bidder.floor_level(ctx)
        raised = surplus_raise(a1, a2, floor, ctx.step)
        if raised:
            final_bid, final_dep, level = _fundable(book, ctx, state, win, a1 - raised)
            raised = a1 - level

    book.post(now, "escrow_release", _escrow_moves(aid, win.bid.bidder, win.bid, win.deposits, ctx, reverse=True),
              cause="winner escrow rebased", info={"auction": aid, "bidder": win.bid.bidder})
    book.post(now, "escrow_lock", _escrow_moves(aid, win.bid.bidder, final_bid, final_dep, ctx),
              cause="winner deposits",
              info={"auction": aid, "bidder": win.bid.bidder, "level": level, "raise": raised,
                    "S": final_bid.value_claim, "R": final_bid.surplus_claim,
                    "toehold": final_bid.toehold, "D_v": final_dep.value_deposit,
                    "D_p": final_dep.purchase_deposit, "D_s": final_dep.surety_deposit,
                    "tokens": final_dep.token_deposit})
    record = AuctionRecord(
        auction_id=aid,
        t0=state.t0,
        t1=now,
        p0=ctx.p0,
        q=ctx.q,
        bid=final_bid,
        clearing=level,
        second_best=a2 if a2 is not None else 0,
        deposits=final_dep,
        t_f=freezeout_fraction(final_bid, ctx.p0, ctx.q),
        t_d=deposit_share(final_bid, ctx.p0, ctx.q),
        t1_holders=dict(t1_holders or {}),
    )
    book.post(now, "auction_clear", cause="auction close",
              info={"auction": aid, "winner": record.winner, "A": level, "A1": a1, "A2": a2,
                    "ranking": ranking})
    return AuctionOutcome(record, ranking, raised)


def _fundable(book: Book, ctx: AuctionContext, state: AuctionState, win: Entry,
              target: Money) -> tuple[Bid, DepositSet, Money]:
    """Lowest level in ``[target, A1]`` the winner can fund and validly bid."""
    party = win.bid.bidder
    # the entry escrow comes back before the final deposits are locked
    back_cash = win.deposits.cash_total
    back_tokens = max(win.bid.toehold - ctx.locked_tokens.get(party, 0), 0)

    def ok(level):
        bid = win.bidder.bid_at(level, ctx)
        cash, tokens = _available(book, party, ctx)
        v = validate_bid(bid, ctx.p0, ctx.q, ctx.t_m, gamma=ctx.gamma, epsilon=ctx.epsilon,
                         cash=cash + back_cash, tokens=tokens + back_tokens,
                         flush_sale=ctx.flush_sale)
        return bool(v), bid

    good, bid = ok(target)
    if good:
        return bid, _deposits(bid, ctx), target
    lo, hi = target, win.level
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if ok(mid)[0]:
            hi = mid
        else:
            lo = mid
    bid = win.bidder.bid_at(hi, ctx) if hi != win.level else win.bid
    return bid, _deposits(bid, ctx), hi


@dataclass
class ClosingResult:
    t1_holders: dict[str, int]
    sold: dict[str, int]           # tokens frozen out per seller (or bought, if negative)
    entitled: dict[str, int]       # retained holdings that carry forfeit entitlements
    pool: VotePool
    unsold: int = 0


def closing_steps(book: Book, record: AuctionRecord, tick: int, *,
                  mm_capacity: Optional[int] = None,
                  holder_demand: Optional[Mapping[str, int]] = None,
                  q_t: Optional[int] = None,
                  pool_target: Fraction = Fraction(1, 2),
                  pool_supermajority: bool = False) -> ClosingResult:
    """Snapshot, freeze-out (or negative freeze-out sale) and vote pool."""
    aid = record.auction_id
    winner = record.winner
    q, p0 = record.q, record.p0
    snapshot = book.holders()
    book.post(tick, "t1_snapshot", cause="closing step 1",
              info={"auction": aid, "holders": snapshot})
    others = {h: n for h, n in snapshot.items() if h != winner}
    moved = freezeout_tokens(record.bid, p0, q)
    sold: dict[str, int] = {}
    unsold = 0
    tok = escrow(aid, winner, "token")
    if moved > 0:
        sold = {h: n for h, n in allocate(moved, others).items() if n}
        moves = []
        for h, n in sold.items():
            moves.append(Move(h, tok, TOKEN, n))
            moves.append(Move(escrow(aid, winner, "purchase"), h, CASH, n * p0))
        book.post(tick, "freeze_out", moves, cause="closing step 2",
                  info={"auction": aid, "tokens": moved, "price": p0, "sellers": sold})
    elif moved < 0:
        offered = -moved
        moves = []
        takers: dict[str, int] = {}
        left = offered
        for h, want in sorted((holder_demand or {}).items()):
            if h == winner or left == 0:
                continue
            n = min(want, left, book.balance(h, CASH) // p0 if p0 else want)
            if n > 0:
                takers[h] = n
                left -= n
        mm = left if mm_capacity is None else min(left, mm_capacity)
        if mm:
            takers[MARKET_MAKER] = mm
            left -= mm
        for h, n in takers.items():
            moves.append(Move(tok, h, TOKEN, n))
            moves.append(Move(h, winner, CASH, n * p0))
        unsold = left
        sold = {h: -n for h, n in takers.items()}
        book.post(tick, "negative_freeze_out", moves, cause="closing step 3",
                  info={"auction": aid, "offered": offered, "price": p0, "buyers": takers,
                        "unsold": unsold})
    entitled = {h: n - sold.get(h, 0) for h, n in others.items() if n - sold.get(h, 0) > 0}
    control = book.balance(tok, TOKEN)
    pool = VotePool(control, q if q_t is None else q_t, pool_target, pool_supermajority)
    book.post(tick, "vote_pool", cause="closing step 4",
              info={"auction": aid, "control_tokens": control, "q_T": pool.q_t,
                    "extra_votes": pool.extra, "target": pool_target})
    return ClosingResult(snapshot, sold, entitled, pool, unsold)


def ranking_winner(levels: Sequence[tuple[str, Money, int]]) -> str:
    """Winner of ``(id, level, arrival)`` triples under the tie rule."""
    return min(levels, key=lambda t: (-t[1], t[2], t[0]))[0]
