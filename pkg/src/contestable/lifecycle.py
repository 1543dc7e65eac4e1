"""Control-period state machine.

One :class:`Dao` owns the ledger and moves between three statuses.  All
mutation goes through :meth:`Dao.dispatch`, which looks the ``(status, event)``
pair up in a fixed table; a pair with no handler raises a typed
:class:`TransitionError` instead of being ignored.

Settlement routing:

* success termination refunds every deposit in full,
* a supervening or periodic auction won by the incumbent runs the reset steps,
* one won by anybody else (or abandonment, or a periodic auction nobody bids
  in) runs the loss steps with the transitional forfeit,
* ``settle`` closes a history at its last price through the plain forfeit
  function, which is how a simulation ends without a supervening auction.

Forfeits are paid to the T1 holder identities recorded when the control party
was installed, whatever they hold now.
"""
from __future__ import annotations

import logging
import random
from dataclasses import dataclass, field
from enum import Enum
from fractions import Fraction
from typing import Any, Callable, Mapping, Optional, Sequence

from .core import DEFAULT_EPSILON, AuctionRecord, BidRejected, guaranteed_gain
from .engine import (
    AuctionContext,
    AuctionState,
    VotePool,
    closing_steps,
    open_auction,
    run_english_auction,
    try_submit,
    vote_pool_resize,
)
from .flush import Order, RegistrationPredicate, run_flush_sale
from .forfeit import STANDARD_DELTA, ForfeitParams, surety_settlement, transitional_case, \
    transitional_forfeit, value_forfeit
from .ledger import CASH, TOKEN, TREASURY, WORLD, Book, Move, escrow
from .market import ExecutionModel, RampProcess, adjust_deposits_stochastic, estimate_expected_forfeit
from .money import Money, allocate
from .strategies import Agent, apply_collusion

log = logging.getLogger(__name__)


class Status(str, Enum):
    OPEN = "Open"
    AUCTION = "AuctionInProgress"
    CONTROL = "ControlPeriod"


EVENTS = ("open_auction", "close_auction", "success", "abandon", "periodic", "settle", "tick")


class TransitionError(RuntimeError):
    def __init__(self, code: str, detail: str = ""):
        super().__init__(f"{code}: {detail}" if detail else code)
        self.code = code


_TABLE: dict[tuple[Status, str], str] = {
    (Status.OPEN, "open_auction"): "_on_open",
    (Status.CONTROL, "open_auction"): "_on_open",
    (Status.AUCTION, "close_auction"): "_on_close",
    (Status.CONTROL, "success"): "_on_success",
    (Status.CONTROL, "abandon"): "_on_abandon",
    (Status.CONTROL, "periodic"): "_on_periodic",
    (Status.CONTROL, "settle"): "_on_settle",
    (Status.OPEN, "tick"): "_on_tick",
    (Status.AUCTION, "tick"): "_on_tick",
    (Status.CONTROL, "tick"): "_on_tick",
}


def transition(status: Status, kind: str) -> str:
    """Handler name for a pair, or the typed error that pair raises."""
    if kind not in EVENTS:
        raise TransitionError("unknown_event", kind)
    try:
        return _TABLE[(status, kind)]
    except KeyError:
        pass
    if kind == "open_auction":
        raise TransitionError("auction_in_progress", "only one auction may run at a time")
    if kind == "close_auction":
        raise TransitionError("no_auction_in_progress")
    if status is Status.AUCTION:
        raise TransitionError("auction_in_progress", f"{kind} must wait for the auction to close")
    raise TransitionError("not_in_control_period", kind)


@dataclass(frozen=True)
class SuccessCriterion:
    threshold: Money
    window: int = 30
    run: int = 10

    def __post_init__(self):
        if not 0 < self.run <= self.window:
            raise ValueError("need 0 < K <= W")


def check_success_termination(prices: Sequence[Money], crit: SuccessCriterion) -> bool:
    """Mean of the last W prices at least S and a run of K ticks at or above S."""
    if len(prices) < crit.window:
        return False
    tail = list(prices[-crit.window:])
    if sum(tail) < crit.threshold * crit.window:
        return False
    best = cur = 0
    for p in tail:
        cur = cur + 1 if p >= crit.threshold else 0
        best = max(best, cur)
    return best >= crit.run


@dataclass
class DaoParams:
    q: int
    t_m: Fraction
    gamma: Fraction = Fraction(0)
    epsilon: Fraction = DEFAULT_EPSILON
    delta: Any = STANDARD_DELTA
    window: int = 30
    run: int = 10
    control_period: int = 360
    auction_ticks: int = 7
    increment: Optional[Money] = None
    r_raise: bool = True
    cap_rule: str = "market_size"
    flush_sale: bool = False
    pool_target: Fraction = Fraction(1, 2)
    pool_supermajority: bool = False
    liquidity_redirect: bool = False
    reference: str = "spot"
    reference_window: int = 5
    mm_capacity: Optional[int] = None
    bounty_prob: float = 0.0
    distribution_delay: int = 0
    adjust: Optional[Mapping[str, Any]] = None
    demand: Sequence[Order] = ()
    demand_fn: Optional[Callable[[int, Money], Sequence[Order]]] = None
    registration: RegistrationPredicate = RegistrationPredicate(everyone=True)
    seed: int = 0


@dataclass
class ControlState:
    record: AuctionRecord
    controller: str
    start: int
    limit: int
    entitled: dict[str, int]
    pool: VotePool
    fp: ForfeitParams
    t1_holders: dict[str, int]
    target: Optional[Money] = None
    execution: Optional[ExecutionModel] = None
    flush: Any = None

    @property
    def aid(self) -> str:
        return self.record.auction_id

    def account(self, kind: str) -> str:
        return escrow(self.aid, self.controller, kind)


@dataclass
class Transition:
    tick: int
    kind: str
    detail: dict = field(default_factory=dict)


class Dao:
    def __init__(self, params: DaoParams, book: Optional[Book] = None,
                 agents: Optional[Mapping[str, Agent]] = None):
        self.p = params
        self.book = book or Book()
        self.agents: dict[str, Agent] = dict(agents or {})
        self.status = Status.OPEN
        self.control: Optional[ControlState] = None
        self.auction: Optional[AuctionState] = None
        self.auction_ref: Optional[Money] = None
        self.prices: list[Money] = []
        self.history: list[Transition] = []
        self.settlements: list[dict] = []
        self._seq = 0
        self._pending: list[tuple[int, Callable[[int], None]]] = []
        self._rng = random.Random(params.seed)
        self.on_install: list[Callable[[ControlState, int], None]] = []

    # ---- plumbing -------------------------------------------------------

    def dispatch(self, kind: str, tick: int, **payload) -> None:
        handler = transition(self.status, kind)
        getattr(self, handler)(tick, **payload)

    def _set_status(self, status: Status, tick: int, cause: str, **info) -> None:
        self.status = status
        self.book.post(tick, "status", cause=cause, info=info, status=status.value)
        self.history.append(Transition(tick, cause, dict(info)))

    @property
    def spot(self) -> Money:
        if not self.prices:
            raise TransitionError("no_price", "no price observed yet")
        return self.prices[-1]

    def reference_price(self) -> Money:
        if self.p.reference == "average":
            tail = self.prices[-self.p.reference_window:]
            return sum(tail) // len(tail)
        return self.spot

    def _context(self, p0: Money) -> AuctionContext:
        locked = {}
        if self.control is not None:
            locked = {self.control.controller: self.book.balance(self.control.account("token"), TOKEN)}
        return AuctionContext(
            p0=p0, q=self.p.q, t_m=self.p.t_m, gamma=self.p.gamma, epsilon=self.p.epsilon,
            increment=self.p.increment, r_raise=self.p.r_raise, cap_rule=self.p.cap_rule,
            flush_sale=self.p.flush_sale, locked_tokens=locked,
        )

    def _sync_toeholds(self, bidders: Sequence[Agent], ctx: AuctionContext) -> None:
        for a in bidders:
            if a.behavior == "scripted":
                continue
            a.toehold = self.book.balance(a.agent_id, TOKEN) + ctx.locked_tokens.get(a.agent_id, 0)

    def _pay_out(self, tick: int, src: str, amount: Money, weights: Mapping[str, int], kind: str,
                 cause: str, info: dict) -> dict[str, int]:
        if amount <= 0:
            return {}
        weights = {h: n for h, n in weights.items() if n > 0}
        if not weights:
            self.book.transfer(tick, kind, src, TREASURY, CASH, amount, cause=cause,
                               info={**info, "amount": amount, "holders": {}})
            return {TREASURY: amount}
        parts = allocate(amount, weights)
        self.book.post(tick, kind, [Move(src, h, CASH, n) for h, n in parts.items()],
                       cause=cause, info={**info, "amount": amount, "holders": parts})
        return parts

    # ---- handlers -------------------------------------------------------

    def _on_tick(self, tick: int, price: Money) -> None:
        if price < 0:
            raise ValueError("negative price")
        self.prices.append(price)
        for due, fn in [p for p in self._pending if p[0] <= tick]:
            self._pending.remove((due, fn))
            fn(tick)
        if self.status is Status.AUCTION and tick >= self.auction.t1:
            self._on_close(tick)
        if self.status is Status.CONTROL:
            ctrl = self.control
            window = self.prices[ctrl.start + 1:] if ctrl.start + 1 < len(self.prices) else []
            crit = SuccessCriterion(ctrl.record.value_claim, self.p.window, self.p.run)
            if check_success_termination(window, crit):
                self._on_success(tick)
            elif tick >= ctrl.limit:
                self._on_periodic(tick)

    def _on_open(self, tick: int, initiator: Optional[Agent] = None,
                 bidders: Sequence[Agent] = (), periodic: bool = False) -> Optional[AuctionState]:
        p0 = self.spot
        ctx = self._context(p0)
        everyone = ([initiator] if initiator is not None else []) + [b for b in bidders if b is not initiator]
        self._sync_toeholds(everyone, ctx)
        apply_collusion(everyone, ctx)
        aid = f"a{self._seq}"
        if initiator is not None and not periodic:
            try:
                state = open_auction(self.book, ctx, initiator, tick, auction_ticks=self.p.auction_ticks,
                                     auction_id=aid, periodic=periodic)
            except BidRejected as exc:
                self.book.post(tick, "bid_rejected", cause="auction not opened",
                               info={"auction": aid, "bidder": initiator.bidder_id,
                                     "reason": exc.reason, "detail": exc.detail})
                return None
        else:
            state = open_auction(self.book, ctx, None, tick, auction_ticks=self.p.auction_ticks,
                                 auction_id=aid, periodic=periodic)
            if initiator is not None:
                try_submit(self.book, state, initiator, tick)
        self._seq += 1
        for b in bidders:
            if b is not initiator:
                try_submit(self.book, state, b, tick)
        self.auction = state
        self.auction_ref = self.reference_price()
        self._set_status(Status.AUCTION, tick, "auction_open", auction=aid, p0=p0,
                         reference=self.auction_ref, periodic=periodic)
        if self.p.auction_ticks == 0:
            self._on_close(tick)
        return state

    def _on_close(self, tick: int) -> None:
        state = self.auction
        outcome = run_english_auction(self.book, state, tick)
        self.auction = None
        ctrl = self.control
        p_ref = self.auction_ref
        if outcome.void:
            if ctrl is not None and state.periodic:
                self._loss(tick, state.p0, state.p0, p_ref, None, "periodic_no_bids")
            elif ctrl is not None:
                self._set_status(Status.CONTROL, tick, "auction_void", auction=state.auction_id)
            else:
                self._set_status(Status.OPEN, tick, "auction_void", auction=state.auction_id)
            return
        record = outcome.record
        if ctrl is None:
            self._install(record, tick)
        elif record.winner == ctrl.controller:
            self._reset(record, tick, p_ref)
        else:
            self._loss(tick, record.value_claim, record.p0, p_ref, record, "auction_lost")

    def _on_success(self, tick: int) -> None:
        ctrl = self.control
        moves = [Move(ctrl.account(k), ctrl.controller, CASH, self.book.balance(ctrl.account(k), CASH))
                 for k in ("value", "surety", "purchase")]
        moves.append(Move(ctrl.account("token"), ctrl.controller, TOKEN,
                          self.book.balance(ctrl.account("token"), TOKEN)))
        self.book.post(tick, "success_refund", moves, cause="success termination",
                       info={"auction": ctrl.aid, "controller": ctrl.controller})
        self.settlements.append({"tick": tick, "kind": "success", "controller": ctrl.controller,
                                 "value_forfeit": 0, "surety_forfeit": 0})
        self._end_control(ctrl, tick)
        self._set_status(Status.OPEN, tick, "success", auction=ctrl.aid)

    def _on_abandon(self, tick: int) -> None:
        price = self.spot
        self._loss(tick, price, price, self.reference_price(), None, "abandon")

    def _on_periodic(self, tick: int, bidders: Optional[Sequence[Agent]] = None) -> None:
        if bidders is None:
            bidders = [a for a in self.agents.values() if a.params.get("periodic", True)]
        self._on_open(tick, None, bidders, periodic=True)

    def _on_settle(self, tick: int) -> None:
        """End a history at the reference price through the plain forfeit function."""
        ctrl = self.control
        x = self.reference_price()
        fp = self._live_fp(ctrl)
        out = value_forfeit(fp, x)
        paid = self._pay_out(tick, ctrl.account("value"), out.forfeit_to_holders, ctrl.entitled,
                             "value_forfeit", "horizon settlement",
                             {"auction": ctrl.aid, "X": x, "S": fp.value_claim})
        self.book.transfer(tick, "value_refund", ctrl.account("value"), ctrl.controller, CASH,
                           out.refund_to_control, cause="horizon settlement", info={"auction": ctrl.aid})
        s_ret, s_forf = self._settle_surety(ctrl, tick, x, x, "horizon settlement")
        self._return_escrow(ctrl, tick)
        self.settlements.append({"tick": tick, "kind": "settle", "controller": ctrl.controller, "X": x,
                                 "value_forfeit": out.forfeit_to_holders, "surety_forfeit": s_forf,
                                 "payouts": paid, "entitled": dict(ctrl.entitled),
                                 "retained": ctrl.fp.retained, "S": ctrl.fp.value_claim,
                                 "P0": ctrl.fp.p0})
        self._end_control(ctrl, tick)
        self._set_status(Status.OPEN, tick, "settle", auction=ctrl.aid, X=x)

    # ---- settlement steps ----------------------------------------------

    def _live_fp(self, ctrl: ControlState) -> ForfeitParams:
        d_v = self.book.balance(ctrl.account("value"), CASH)
        return ForfeitParams(d_v, ctrl.fp.p0, ctrl.fp.value_claim, ctrl.fp.retained, ctrl.fp.delta)

    def _settle_surety(self, ctrl: ControlState, tick: int, p0_w: Money, s_w: Money, cause: str):
        d_s = self.book.balance(ctrl.account("surety"), CASH)
        ret, forf = surety_settlement(d_s, ctrl.fp.value_deposit, ctrl.record.p0, p0_w, s_w, self.p.q)
        self._pay_out(tick, ctrl.account("surety"), forf, ctrl.entitled, "surety_forfeit", cause,
                      {"auction": ctrl.aid, "P0_w": p0_w, "S_w": s_w})
        self.book.transfer(tick, "surety_refund", ctrl.account("surety"), ctrl.controller, CASH, ret,
                           cause=cause, info={"auction": ctrl.aid})
        return ret, forf

    def _return_escrow(self, ctrl: ControlState, tick: int, tokens: bool = True) -> None:
        moves = [Move(ctrl.account("purchase"), ctrl.controller, CASH,
                      self.book.balance(ctrl.account("purchase"), CASH))]
        if tokens:
            moves.append(Move(ctrl.account("token"), ctrl.controller, TOKEN,
                              self.book.balance(ctrl.account("token"), TOKEN)))
        self.book.post(tick, "escrow_return", moves, cause="deposit return", info={"auction": ctrl.aid})

    def _settle_previous(self, ctrl: ControlState, tick: int, s_w: Money, p0_w: Money, p_ref: Money,
                         cause: str) -> dict:
        fp = self._live_fp(ctrl)
        case = transitional_case(fp.p0, s_w, p_ref)
        out = transitional_forfeit(fp, s_w, p_ref)
        paid = self._pay_out(tick, ctrl.account("value"), out.forfeit_to_holders, ctrl.entitled,
                             "value_forfeit", cause,
                             {"auction": ctrl.aid, "case": case, "S_w": s_w, "P_ref": p_ref})
        self.book.transfer(tick, "value_refund", ctrl.account("value"), ctrl.controller, CASH,
                           out.refund_to_control, cause=cause, info={"auction": ctrl.aid, "case": case})
        s_ret, s_forf = self._settle_surety(ctrl, tick, p0_w, s_w, cause)
        row = {"tick": tick, "kind": cause, "controller": ctrl.controller, "case": case,
               "S_w": s_w, "P0_w": p0_w, "P_ref": p_ref,
               "value_forfeit": out.forfeit_to_holders, "value_refund": out.refund_to_control,
               "surety_forfeit": s_forf, "surety_refund": s_ret, "payouts": paid,
               "entitled": dict(ctrl.entitled)}
        self.settlements.append(row)
        return row

    def _reset(self, record: AuctionRecord, tick: int, p_ref: Money) -> None:
        prev = self.control
        new_tok = escrow(record.auction_id, record.winner, "token")
        self.book.transfer(tick, "token_rebase", prev.account("token"), new_tok, TOKEN,
                           self.book.balance(prev.account("token"), TOKEN), cause="reset step 2",
                           info={"from": prev.aid, "to": record.auction_id})
        self._settle_previous(prev, tick, record.value_claim, record.p0, p_ref, "reset")
        self._return_escrow(prev, tick, tokens=False)
        self.book.post(tick, "vote_pool_close", cause="reset step 3", info={"auction": prev.aid})
        self._end_control(prev, tick, replaced=True)
        self._install(record, tick, cause="reset")

    def _loss(self, tick: int, s_w: Money, p0_w: Money, p_ref: Money,
              record: Optional[AuctionRecord], cause: str) -> None:
        prev = self.control
        self.book.post(tick, "vote_pool_close", cause="loss step 1", info={"auction": prev.aid})
        self._return_escrow(prev, tick)
        self._settle_previous(prev, tick, s_w, p0_w, p_ref, cause)
        self._end_control(prev, tick)
        if record is not None:
            self._install(record, tick, cause=cause)
        else:
            self._set_status(Status.OPEN, tick, cause, S_w=s_w, P0_w=p0_w)

    def _end_control(self, ctrl: ControlState, tick: int, replaced: bool = False) -> None:
        agent = self.agents.get(ctrl.controller)
        if agent is not None and agent.behavior == "destroyer" and not replaced:
            g = int(agent.params.get("short_gain", 0))
            p0 = ctrl.record.p0
            x = self.spot
            gain = g * max(p0 - x, 0) // p0 if p0 else 0
            if gain:
                self.book.transfer(tick, "short_gain", WORLD, ctrl.controller, CASH, gain,
                                   cause="exogenous short position", info={"G": g, "X": x, "P0": p0})
        self.control = None

    def _install(self, record: AuctionRecord, tick: int, cause: str = "auction_won") -> None:
        p = self.p
        winner = record.winner
        flush = None
        if p.flush_sale:
            agent = self.agents.get(winner)
            concealed = {}
            if agent is not None and agent.behavior == "concealer":
                concealed = {winner: int(agent.params.get("hidden", 0))}
            quantity = p.q - record.deposits.token_deposit
            orders = p.demand_fn(quantity, record.p0) if p.demand_fn else p.demand
            flush = run_flush_sale(
                self.book, record, tick, orders=orders, registration=p.registration,
                concealed=concealed, bounty_prob=p.bounty_prob, rng=self._rng,
                liquidity_redirect=p.liquidity_redirect, t_m=p.t_m,
                distribute=p.distribution_delay == 0, pool_target=p.pool_target,
                pool_supermajority=p.pool_supermajority,
            )
            if p.distribution_delay:
                from .flush import distribute_token_auction_surplus

                reg = p.registration.restrict(winner)
                self._pending.append((tick + p.distribution_delay,
                                      lambda t, f=flush, r=reg: distribute_token_auction_surplus(self.book, f, r, t)))
            entitled, pool, t1 = flush.entitled, flush.pool, flush.t1_holders
        else:
            res = closing_steps(self.book, record, tick, mm_capacity=p.mm_capacity,
                                pool_target=p.pool_target, pool_supermajority=p.pool_supermajority)
            entitled, pool, t1 = res.entitled, res.pool, res.t1_holders
        record = AuctionRecord(record.auction_id, record.t0, record.t1, record.p0, record.q, record.bid,
                               record.clearing, record.second_best, record.deposits, record.t_f,
                               record.t_d, dict(t1))
        retained = p.q - record.deposits.token_deposit
        fp = ForfeitParams(record.deposits.value_deposit, record.p0, record.value_claim, retained, p.delta)
        agent = self.agents.get(winner)
        target = exe = None
        ctx = self._context(record.p0)
        if agent is not None:
            target = agent.target_value(ctx)
            cost = agent.plan_cost(ctx) if agent.behavior != "destroyer" else int(agent.params.get("cost", 0))
            if cost:
                self.book.transfer(tick, "plan_cost", winner, WORLD, CASH, cost, cause="plan execution",
                                   info={"agent": winner, "C": cost})
            exe_cfg = agent.params.get("execution", {})
            if target is not None:
                exe = ExecutionModel(target, int(exe_cfg.get("duration", 60)),
                                     Fraction(str(exe_cfg.get("completion", 1))))
        ctrl = ControlState(record, winner, tick, tick + p.control_period, entitled, pool, fp, dict(t1),
                            target, exe, flush)
        self.control = ctrl
        if p.adjust and exe is not None:
            self._adjust(ctrl, tick)
        self._set_status(Status.CONTROL, tick, cause, auction=record.auction_id, controller=winner,
                         A=record.clearing, S=record.value_claim, R=record.bid.surplus_claim)
        for hook in self.on_install:
            hook(ctrl, tick)

    def _adjust(self, ctrl: ControlState, tick: int) -> None:
        cfg = self.p.adjust
        horizon = int(cfg.get("horizon", self.p.control_period))
        proc = RampProcess(ctrl.record.p0, ctrl.execution, float(cfg.get("sigma", 0.0)), horizon)
        est = estimate_expected_forfeit(ctrl.fp, ctrl.record.deposits.surety_deposit, self.p.q, proc,
                                        int(cfg.get("samples", 10_000)), int(cfg.get("seed", self.p.seed)))
        bound = guaranteed_gain(ctrl.record.bid, ctrl.record.p0, self.p.q)
        adj = adjust_deposits_stochastic(ctrl.record.deposits, est, bound)
        cut_v = ctrl.record.deposits.value_deposit - adj.deposits.value_deposit
        cut_s = ctrl.record.deposits.surety_deposit - adj.deposits.surety_deposit
        self.book.post(tick, "deposit_adjustment",
                       [Move(ctrl.account("value"), ctrl.controller, CASH, cut_v),
                        Move(ctrl.account("surety"), ctrl.controller, CASH, cut_s)],
                       cause="expected-forfeit adjustment at auction close",
                       info={"E_value": float(est.value), "E_surety": float(est.surety),
                             "se_value": est.value_se, "se_surety": est.surety_se,
                             "value_clamped": adj.value_clamped, "surety_clamped": adj.surety_clamped})
        ctrl.fp = ForfeitParams(adj.deposits.value_deposit, ctrl.fp.p0, ctrl.fp.value_claim,
                                ctrl.fp.retained, ctrl.fp.delta)

    def resize_pool(self, q_t: int) -> VotePool:
        if self.control is None:
            raise TransitionError("not_in_control_period", "resize_pool")
        self.control.pool = vote_pool_resize(self.control.pool, q_t)
        return self.control.pool
