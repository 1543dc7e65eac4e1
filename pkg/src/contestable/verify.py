"""Invariant suites behind ``contestable verify``.

Each suite returns a :class:`SuiteResult` whose checks carry a numeric margin
(how far the property is from failing, in micro-units where that makes sense)
and, on failure, a witness: the inputs or scenario that broke it.  Counts scale
with ``Options.scale`` so the acceptance tests can run the same suites at full
size.

Mutations deliberately break the mechanism to show the suites notice:
``delta_zero`` replaces the forfeit profile with zero and ``forfeit_clamp``
removes the clamp of the forfeit into ``[0, D_v]``.
"""
from __future__ import annotations

import contextlib
import random
import time
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Any, Callable, Iterator, Optional, Sequence
from unittest import mock

import numpy as np

from . import forfeit as forfeit_mod
from .core import (
    Bid,
    BusinessPlan,
    auction_parameter,
    auction_parameter_by_share,
    guaranteed_gain,
    required_deposits,
    validate_bid,
)
from .engine import AuctionContext, VotePool, closing_steps, open_auction, run_english_auction, try_submit, \
    vote_pool_resize
from .flush import RegistrationPredicate, linear_demand, run_token_auction
from .forfeit import (
    STANDARD_DELTA,
    ConstantDelta,
    ForfeitParams,
    check_delta_profile,
    surety_settlement,
    transitional_forfeit,
    value_forfeit,
)
from .ledger import CASH, TOKEN, WORLD, Book, LedgerError, Move, replay
from .lifecycle import EVENTS, Status, TransitionError, transition, Dao
from .market import (
    ExecutionModel,
    ForfeitEstimate,
    RampProcess,
    TwoPointProcess,
    adjust_deposits_stochastic,
    deterministic_path,
    estimate_expected_forfeit,
    stochastic_path,
)
from .money import allocate, fmt
from .oracle import brute_force_best_response, overclaim_check
from .scenario import ConfigError, bundled_names, load_scenario
from .simulate import RunResult, run, wealth
from .strategies import Agent, PlanFamily, model_profit, pick_curve_grid

MUTATIONS = ("delta_zero", "forfeit_clamp")

# event kinds allowed to move value across the model boundary
EXOGENOUS = frozenset({"genesis", "plan_cost", "short_gain", "token_auction"})


@dataclass
class Check:
    suite: str
    name: str
    ok: bool
    margin: Optional[float] = None
    witness: Optional[dict] = None


@dataclass
class SuiteResult:
    name: str
    checks: list[Check] = field(default_factory=list)
    seconds: float = 0.0

    @property
    def ok(self) -> bool:
        return all(c.ok for c in self.checks)

    @property
    def failures(self) -> list[Check]:
        return [c for c in self.checks if not c.ok]

    def add(self, name: str, ok: bool, margin=None, witness=None) -> Check:
        c = Check(self.name, name, bool(ok), margin, None if ok else witness)
        self.checks.append(c)
        return c


@dataclass(frozen=True)
class Options:
    seed: int = 0
    scale: float = 1.0
    mutations: frozenset = frozenset()

    def n(self, base: int, floor: int = 1) -> int:
        return max(int(base * self.scale), floor)

    def rng(self, salt: str) -> random.Random:
        return random.Random(f"{self.seed}:{salt}")

    @property
    def delta(self):
        return ConstantDelta(0) if "delta_zero" in self.mutations else STANDARD_DELTA


@contextlib.contextmanager
def mutated(opts: Options) -> Iterator[None]:
    with contextlib.ExitStack() as stack:
        if "forfeit_clamp" in opts.mutations:
            orig = forfeit_mod.forfeit_amount
            stack.enter_context(mock.patch.object(
                forfeit_mod, "forfeit_amount", lambda fp, x, clamp=True: orig(fp, x, clamp=False)))
        yield


# ---- random inputs ---------------------------------------------------------

def _micros(rng: random.Random, lo: int, hi: int) -> int:
    """Random amount in whole fiat units from ``lo`` to ``hi`` plus random cents."""
    return rng.randint(lo, hi) * 1_000_000 + rng.randint(0, 99) * 10_000


def random_bid(rng: random.Random, t_m: Fraction = Fraction(1, 2)) -> tuple[Bid, int, int]:
    """A valid bid with its ``(P0, q)``."""
    q = rng.choice([100, 1000, 2500, 10_000])
    p0 = _micros(rng, 1, 50)
    s = p0 + _micros(rng, 0, 30) + 1
    h = rng.randint(0, int(t_m * q))
    cap = int((t_m * q - h) * (s - p0))
    r = rng.randint(-h * (s - p0), cap) if rng.random() < 0.2 else rng.randint(0, cap)
    return Bid("b", s, r, h), p0, q


def _partition(rng: random.Random, total: int, parts: int) -> list[int]:
    parts = max(1, min(parts, total))
    cuts = sorted(rng.sample(range(1, total), parts - 1)) if parts > 1 else []
    edges = [0] + cuts + [total]
    return [b - a for a, b in zip(edges, edges[1:])]


def _holders(rng: random.Random, total: int, count: int) -> list[dict]:
    return [{"id": f"h{i:02d}", "tokens": n, "cash": "0"} for i, n in enumerate(_partition(rng, total, count))]


def holder_history(rng: random.Random, seed: int = 0, delta: Optional[dict] = None) -> dict:
    """One control period ended at a random ``X`` in ``[P0, S]`` by a horizon settle."""
    q = rng.choice([100, 1000, 2500])
    p0 = _micros(rng, 1, 40)
    s = p0 + _micros(rng, 0, 30) + 10_000
    h = rng.randint(0, q // 4)
    cap = ((q // 2 - h) * (s - p0))
    r = rng.randint(0, cap)
    roll = rng.random()
    x = p0 if roll < 0.1 else s if roll < 0.2 else rng.randint(p0, s)
    bid = Bid("bidder", s, r, h)
    cash = required_deposits(bid, p0, q).cash_total + 1_000_000
    return {
        "name": "holder_history", "seed": seed, "horizon": 4, "end": "settle",
        "dao": {"q": q, "price": fmt(p0), "t_m": "1/2", "auction_ticks": 0,
                "delta": delta or {"kind": "constant", "micros": 1}},
        "holders": _holders(rng, q - h, rng.randint(2, 8)),
        "agents": [{"id": "bidder", "behavior": "scripted", "tokens": h, "cash": fmt(cash),
                    "bid": {"S": fmt(s), "R": fmt(r), "toehold": h}}],
        "price_process": {"kind": "series", "points": [[0, fmt(p0)], [2, fmt(x)]]},
        "events": [{"tick": 1, "kind": "auction", "initiator": "bidder"}],
    }


def destruction_case(rng: random.Random, seed: int = 0) -> dict:
    """A destroyer with a plausible fake plan and a short position worth less than P0 q."""
    q = rng.choice([100, 1000, 2000])
    p0 = _micros(rng, 2, 30)
    v = p0 + _micros(rng, 1, 10)
    n = (v - p0) * q
    c = rng.randint(0, n // 4)
    x = rng.randint(0, p0 - 1)
    g = rng.randint(0, p0 * q - 1)
    cash = 3 * p0 * q + n
    dur = rng.randint(1, 20)
    return {
        "name": "destruction_case", "seed": seed, "horizon": dur + 5, "end": "settle",
        "dao": {"q": q, "price": fmt(p0), "t_m": "1/2", "gamma": "0", "auction_ticks": 0},
        "holders": _holders(rng, q, rng.randint(2, 10)),
        "agents": [{"id": "raider", "behavior": "destroyer", "cash": fmt(cash),
                    "plans": [[fmt(v), fmt(c)]], "execution": {"duration": dur},
                    "params": {"destroy_to": fmt(x), "short_gain": fmt(g)}}],
        "price_process": {"kind": "execution", "sigma": 0.0},
        "events": [{"tick": 1, "kind": "auction", "initiator": "raider"}],
    }


def two_bidder_case(rng: random.Random, seed: int = 0) -> dict:
    q = rng.choice([100, 1000, 2000])
    p0 = _micros(rng, 1, 30)
    plans = []
    for _ in range(2):
        v = p0 + _micros(rng, 1, 10)
        n = (v - p0) * q
        c = rng.randint(0, n // 2)
        plans.append((v, c))
    cash = 4 * max(v for v, _ in plans) * q
    return {
        "name": "two_bidders", "seed": seed, "horizon": 3,
        "dao": {"q": q, "price": fmt(p0), "t_m": rng.choice(["1/2", "1/3", "2/3"]), "auction_ticks": 1},
        "holders": _holders(rng, q, rng.randint(2, 6)),
        "agents": [{"id": f"b{i}", "behavior": "truthful", "cash": fmt(cash), "plans": [[fmt(v), fmt(c)]]}
                   for i, (v, c) in enumerate(plans)],
        "price_process": {"kind": "series", "points": [[0, fmt(p0)]]},
        "events": [{"tick": 1, "kind": "auction", "initiator": "b0", "bidders": ["b1"]}],
    }


def flush_pair(rng: random.Random, seed: int = 0) -> tuple[dict, dict]:
    """The same bidder concealing part of its toehold, and declaring all of it."""
    q = rng.choice([100, 1000])
    p0 = _micros(rng, 2, 20)
    v = p0 + _micros(rng, 1, 10)
    h = rng.randint(2, q // 5)
    hidden = rng.randint(1, h - 1)
    c = rng.randint(0, (v - p0) * q // 4)
    intercept = p0 + _micros(rng, 1, 8)
    slope = rng.randint(1, max((intercept - p0) // (2 * q), 1))
    cash = 4 * v * q

    def cfg(hid: int) -> dict:
        return {
            "name": "flush_pair", "seed": seed, "horizon": 3,
            "dao": {"q": q, "price": fmt(p0), "t_m": "1/2", "auction_ticks": 0},
            "variants": {"flush_sale": True, "r_raise": False},
            "holders": _holders(random.Random(f"{seed}:{q}:{h}"), q - h, 5),
            "agents": [{"id": "bidder", "behavior": "concealer", "tokens": h, "cash": fmt(cash),
                        "plans": [[fmt(v), fmt(c)]], "params": {"hidden": hid}}],
            "demand": {"kind": "linear", "intercept": fmt(intercept), "slope": fmt(slope), "bidders": 7},
            "registration": {"all": True},
            "price_process": {"kind": "series", "points": [[0, fmt(p0)]]},
            "events": [{"tick": 1, "kind": "auction", "initiator": "bidder"}],
        }

    return cfg(hidden), cfg(0)


def random_family(rng: random.Random, p0: int, q: int, curve_points: int = 120) -> PlanFamily:
    """Finite plan sets and thinned concave curves, about half each."""
    if rng.random() < 0.5:
        k = rng.randint(1, 8)
        pairs = []
        for _ in range(k):
            v = p0 + rng.randint(-2_000_000, 12_000_000)
            c = rng.randint(0, max((abs(v - p0)) * q, 1))
            pairs.append((v, c))
        return PlanFamily.of(pairs)
    kind = rng.choice(["saturating", "sqrt"])
    gain = _micros(rng, 1, 12)
    scale = _micros(rng, 1, 5) * q // 10 + 1_000_000
    c_max = rng.randint(1, 4) * scale
    fam = PlanFamily.concave(kind, p0, gain, scale, c_max, points=2000)
    return pick_curve_grid(fam, curve_points)


# ---- suites -----------------------------------------------------------------

def suite_identities(opts: Options) -> SuiteResult:
    res = SuiteResult("identities")
    rng = opts.rng("identities")
    worst = None
    for _ in range(opts.n(2000)):
        bid, p0, q = random_bid(rng)
        if not validate_bid(bid, p0, q, Fraction(1, 2)):
            continue
        a = auction_parameter(bid, p0, q)
        if a != auction_parameter_by_share(bid, p0, q):
            res.add("auction_parameter_forms", False, witness={"bid": bid.__dict__, "p0": p0, "q": q})
            break
        dep = required_deposits(bid, p0, q, epsilon=Fraction(1, 100))
        m = dep.value_deposit - guaranteed_gain(bid, p0, q)
        worst = m if worst is None else min(worst, m)
        if m <= 0:
            res.add("value_deposit_strict", False, m, {"bid": bid.__dict__, "p0": p0, "q": q})
            break
        more = required_deposits(bid, p0, q, gamma=Fraction(1, 4))
        if more.surety_deposit > dep.surety_deposit:
            res.add("surety_monotone_gamma", False, witness={"bid": bid.__dict__})
        r_up = Bid(bid.bidder, bid.value_claim, bid.surplus_claim + (bid.value_claim - p0), bid.toehold)
        if bid.surplus_claim >= 0 and required_deposits(r_up, p0, q).purchase_deposit < dep.purchase_deposit:
            res.add("purchase_monotone_r", False, witness={"bid": bid.__dict__})
    res.add("auction_parameter_forms", True)
    res.add("value_deposit_strict", worst is None or worst > 0, worst)
    ok = True
    for _ in range(opts.n(500)):
        total = rng.randint(-10**12, 10**12)
        weights = {f"k{i}": rng.randint(0, 1000) for i in range(rng.randint(1, 12))}
        if not any(weights.values()):
            continue
        if sum(allocate(total, weights).values()) != total:
            ok = False
            res.add("allocation_sums", False, witness={"total": total, "weights": weights})
            break
    res.add("allocation_sums", ok, 0)
    return res


def suite_forfeit(opts: Options) -> SuiteResult:
    res = SuiteResult("forfeit")
    rng = opts.rng("forfeit")
    delta = opts.delta
    try:
        check_delta_profile(delta)
        res.add("delta_positive", True)
    except forfeit_mod.ProfileError as exc:
        res.add("delta_positive", False, witness={"error": str(exc)})
    worst = None
    for _ in range(opts.n(300)):
        bid, p0, q = random_bid(rng)
        if bid.value_claim == p0 or not validate_bid(bid, p0, q, Fraction(1, 2)):
            continue
        dep = required_deposits(bid, p0, q)
        retained = q - (bid.toehold + int(Fraction(bid.surplus_claim, (bid.value_claim - p0) * q) * q))
        fp = ForfeitParams(dep.value_deposit, p0, bid.value_claim, retained, delta)
        xs = sorted({p0, bid.value_claim, *(rng.randint(p0, bid.value_claim) for _ in range(20))})
        prev = None
        for x in xs:
            out = value_forfeit(fp, x)
            if out.forfeit_to_holders + out.refund_to_control != fp.value_deposit or out.refund_to_control < 0:
                res.add("forfeit_plus_refund", False, witness={"fp": repr(fp), "X": x})
                return res
            slack = retained * x + out.forfeit_to_holders - retained * bid.value_claim
            worst = slack if worst is None else min(worst, slack)
            if slack <= 0:
                res.add("holder_guarantee", False, slack, {"fp": repr(fp), "X": x})
                return res
            if prev is not None and out.forfeit_to_holders > prev:
                res.add("forfeit_monotone", False, witness={"fp": repr(fp), "X": x})
                return res
            prev = out.forfeit_to_holders
        for _ in range(5):
            s_w = rng.randint(p0 // 2, 2 * bid.value_claim)
            p_ref = rng.randint(p0 // 2, 2 * bid.value_claim)
            t = transitional_forfeit(fp, s_w, p_ref)
            if t.forfeit_to_holders > fp.value_deposit or t.refund_to_control < 0:
                res.add("transitional_bounded", False, witness={"fp": repr(fp), "S_w": s_w, "P_ref": p_ref})
                return res
            if p_ref >= p0:
                plain = value_forfeit(fp, p_ref).forfeit_to_holders
                credit = value_forfeit(fp.with_claim(s_w), p_ref).forfeit_to_holders
                if t.forfeit_to_holders != max(plain - credit, 0):
                    res.add("transitional_case1_algebra", False, witness={"fp": repr(fp), "S_w": s_w})
                    return res
            if s_w >= bid.value_claim and t.forfeit_to_holders != 0:
                res.add("reaffirmation_safe", False, witness={"fp": repr(fp), "S_w": s_w, "P_ref": p_ref})
                return res
            if s_w >= bid.value_claim:
                ret, lost = surety_settlement(dep.surety_deposit, fp.value_deposit, p0, p_ref, s_w, q)
                if lost and p_ref >= p0:
                    res.add("reaffirmation_surety", False, witness={"S_w": s_w, "P_ref": p_ref})
                    return res
    for name in ("forfeit_plus_refund", "forfeit_monotone", "transitional_bounded", "transitional_case1_algebra",
                 "reaffirmation_safe"):
        res.add(name, True)
    res.add("holder_guarantee", worst is None or worst > 0, worst)
    return res


def oracle_certificate(opts: Options, families: int) -> list[tuple[str, Any]]:
    rng = opts.rng("oracle")
    out = []
    for i in range(families):
        q = rng.choice([100, 1000])
        p0 = _micros(rng, 1, 20)
        fam = random_family(rng, p0, q)
        h = rng.randint(0, q // 10)
        s_max = max(p.value for p in fam.plans) * 3 // 2 + 1_000_000
        r = brute_force_best_response(fam, h, p0, q, Fraction(1, 2), delta=opts.delta,
                                      s_step=max((s_max - p0) // 60, 1000), r_step=1000, s_max=s_max)
        out.append((f"family{i}:{'curve' if fam.curve else 'finite'}", r))
    return out


def overclaim_witnesses(opts: Options, plans: int) -> tuple[list, list]:
    """Equal-payoff bids above ``S = V``: (all probes, those that tie or beat)."""
    rng = opts.rng("overclaim")
    probes, bad = [], []
    for _ in range(plans):
        q = rng.choice([100, 1000])
        p0 = _micros(rng, 1, 20)
        v = p0 + _micros(rng, 1, 10)
        c = rng.randint(0, (v - p0) * q // 2)
        h = rng.randint(0, q // 10)
        plan = BusinessPlan(v, c)
        claims = sorted({v + rng.randint(1, 5_000_000) for _ in range(8)})
        for e in overclaim_check(plan, h, p0, q, claims, delta=opts.delta):
            probes.append(e)
            if e.gap >= 0:
                bad.append({"plan": [v, c], "toehold": h, "P0": p0, "q": q, "S": e.value_claim,
                            "R": str(e.surplus_claim), "gap": str(e.gap)})
    return probes, bad


def suite_truthfulness(opts: Options) -> SuiteResult:
    res = SuiteResult("truthfulness")
    certs = oracle_certificate(opts, opts.n(20))
    margins = [r.margin for _, r in certs if r.margin is not None]
    failed = [(n, r) for n, r in certs if not r.certified]
    res.add("oracle_certificate", not failed, max(margins) - 1000 if margins else None,
            {"family": failed[0][0], "oracle_A": failed[0][1].level, "optimal_A": failed[0][1].optimal_level}
            if failed else None)
    probes, bad = overclaim_witnesses(opts, opts.n(40))
    gap = max((e.gap for e in probes), default=None)
    res.add("no_overclaim_tie", not bad, float(-gap) if gap is not None else None,
            {"tie": bad[0], "count": len(bad)} if bad else None)
    exact = all(e.gap == -e.delta for e in probes)
    res.add("gap_equals_delta", exact)
    return res


def _agent_ctx(rng: random.Random) -> tuple[AuctionContext, list[Agent]]:
    q = rng.choice([100, 1000])
    p0 = _micros(rng, 1, 20)
    ctx = AuctionContext(p0=p0, q=q, t_m=Fraction(1, 2), gamma=Fraction(0), epsilon=Fraction(1, 100))
    agents = []
    for i in range(rng.randint(2, 6)):
        v = p0 + _micros(rng, 1, 10)
        c = rng.randint(0, (v - p0) * q // 2)
        agents.append(Agent(f"a{i}", PlanFamily.of([(v, c)]), 0, "truthful", arrival=rng.randint(0, 3)))
    return ctx, agents


def _auction_book(ctx: AuctionContext, agents: Sequence[Agent], rng: random.Random) -> Book:
    book = Book()
    moves = [Move(WORLD, a.agent_id, CASH, 4 * ctx.p0 * ctx.q + 10**12) for a in agents]
    holders = _partition(rng, ctx.q, rng.randint(2, 8))
    moves += [Move(WORLD, f"h{i}", TOKEN, n) for i, n in enumerate(holders)]
    book.post(0, "genesis", moves)
    return book


def suite_auction(opts: Options) -> SuiteResult:
    res = SuiteResult("auction")
    rng = opts.rng("auction")
    ok_win = ok_tok = ok_cash = ok_toe = True
    for k in range(opts.n(200)):
        ctx, agents = _agent_ctx(rng)
        book = _auction_book(ctx, agents, rng)
        state = open_auction(book, ctx, None, 0, auction_id=f"a{k}")
        for a in agents:
            try_submit(book, state, a, 0)
        if not state.entries:
            continue
        levels = {e.bid.bidder: (e.level, e.arrival) for e in state.entries.values()}
        out = run_english_auction(book, state, 0)
        top = max(levels.values())[0]
        if levels[out.record.winner][0] != top:
            ok_win = False
            res.add("winner_argmax", False, witness={"levels": levels, "winner": out.record.winner})
        before = sum(v for (a, s), v in book.balances.items() if s == TOKEN and a != WORLD)
        purchase = book.balance(f"escrow/a{k}/{out.record.winner}/purchase", CASH)
        cash_before = {h: book.balance(h, CASH) for h in book.holders()}
        closing = closing_steps(book, out.record, 0)
        after = sum(v for (a, s), v in book.balances.items() if s == TOKEN and a != WORLD)
        if before != after or sum(closing.t1_holders.values()) != ctx.q - out.record.bid.toehold:
            ok_tok = False
            res.add("closing_tokens", False, witness={"before": before, "after": after})
        paid = purchase - book.balance(f"escrow/a{k}/{out.record.winner}/purchase", CASH)
        got = sum(book.balance(h, CASH) - c for h, c in cash_before.items())
        if paid != got:
            ok_cash = False
            res.add("closing_cash", False, witness={"paid": paid, "received": got})
        # toehold irrelevance: same S and A from a different (t_b, R) split
        win = out.record.bid
        s, p0, q = win.value_claim, ctx.p0, ctx.q
        a = auction_parameter(win, p0, q)
        h2 = rng.randint(0, q // 10)
        alt = Bid(win.bidder, s, (q - h2) * (s - p0) - a, h2)
        if auction_parameter(alt, p0, q) != a:
            ok_toe = False
    res.add("winner_argmax", ok_win)
    res.add("closing_tokens", ok_tok)
    res.add("closing_cash", ok_cash)
    res.add("toehold_irrelevance", ok_toe)
    worst = None
    for _ in range(opts.n(300)):
        q = rng.randint(10, 10**6)
        pool = VotePool(rng.randint(1, q // 2), q)
        for _ in range(10):
            pool = vote_pool_resize(pool, max(rng.randint(pool.control_tokens, 3 * q), 1))
            margin = 2 * pool.control_votes - (pool.q_t + pool.extra)
            worst = margin if worst is None else min(worst, margin)
            if not pool.majority_ok:
                res.add("vote_majority", False, margin, {"pool": repr(pool)})
                return res
    res.add("vote_majority", True, worst)
    return res


def holder_guarantee_run(raw: dict) -> tuple[bool, list[dict], RunResult]:
    """Each T1 holder's slack ``r X + f - r S``; all must be >= 0 and sum to delta."""
    r = run(load_scenario(raw))
    rows = [s for s in r.summary["settlements"] if s["kind"] == "settle"]
    if not rows:
        return False, [], r
    row = rows[-1]
    s, x = row["S"], row["X"]
    slacks = []
    for h, n in row["entitled"].items():
        f = row["payouts"].get(h, 0)
        slacks.append({"holder": h, "retained": n, "forfeit": f, "slack": n * x + f - n * s})
    cfg = r.cfg
    d = int(cfg.delta(s, x)) if x <= s else 0
    total = sum(e["slack"] for e in slacks)
    ok = all(e["slack"] >= 0 for e in slacks) and total == d and d > 0 and p0_ok(row)
    return ok, slacks, r


def p0_ok(row: dict) -> bool:
    return row["P0"] <= row["X"] <= row["S"]


def destruction_run(raw: dict) -> dict:
    r = run(load_scenario(raw))
    raider = next(p for p in r.payoffs if p["party"] == "raider")
    row = next((s for s in r.summary["settlements"] if s["kind"] == "settle"), None)
    x = r.prices[-1]
    p0 = r.cfg.price
    loss = sum(n for n in row["entitled"].values()) * max(p0 - x, 0) if row else 0
    comp = (row["value_forfeit"] + row["surety_forfeit"]) if row else 0
    return {"payoff": raider["payoff"], "holder_loss": loss, "compensation": comp,
            "won": row is not None, "X": x, "P0": p0}


def two_bidder_run(raw: dict) -> Optional[dict]:
    """Winner profit at the exact clearing bid, with the two reference formulas."""
    r = run(load_scenario(raw))
    cfg = r.cfg
    clears = [e for e in r.book.events if e.kind == "auction_clear"]
    if not clears or clears[0].info["A2"] is None:
        return None
    info = clears[0].info
    lock = next(e for e in r.book.events if e.kind == "escrow_lock")
    winner = info["winner"]
    agent = next(a for a in cfg.agents if a["id"] == winner)
    plan = agent["family"].plans[0]
    bid = Bid(winner, lock.info["S"], lock.info["R"], lock.info["toehold"])
    profit = model_profit(plan, bid, cfg.price, cfg.q, delta=cfg.delta)
    psi = plan.surplus(cfg.price, cfg.q)
    a1, a2 = info["A1"], info["A2"]
    step = cfg.increment if cfg.increment is not None else cfg.q
    stated = min((1 - cfg.t_m) * psi, a1 - a2)
    engine = min(a1 - a2, cfg.t_m * plan.gain(cfg.price, cfg.q) - plan.cost)
    return {"profit": profit, "stated": stated, "engine": engine, "step": step,
            "stated_gap": abs(profit - stated), "engine_gap": abs(profit - engine),
            "A1": a1, "A2": a2, "psi": psi, "t_m": cfg.t_m}


def flush_pair_run(raws: tuple[dict, dict]) -> Optional[dict]:
    """Payoffs marked at each run's re-auction clearing price."""
    out = []
    for raw in raws:
        r = run(load_scenario(raw))
        auc = next((e for e in r.book.events if e.kind == "token_auction"), None)
        if auc is None:
            return None
        clearing = auc.info["clearing"]
        start = next(a for a in r.cfg.agents if a["id"] == "bidder")
        value = wealth(r.book, "bidder", clearing) - start["cash"] - start["tokens"] * r.cfg.price
        out.append((value, clearing, r))
    (pc, cc, rc), (ph, ch, rh) = out
    return {"concealer": pc, "honest": ph, "clearing_concealer": cc, "clearing_honest": ch,
            "p0": rc.cfg.price, "gap": ph - pc}


def suite_lifecycle(opts: Options) -> SuiteResult:
    res = SuiteResult("lifecycle")
    ok = True
    for st in Status:
        for ev in EVENTS:
            try:
                handler = transition(st, ev)
                if not callable(getattr(Dao, handler, None)):
                    ok = False
            except TransitionError as exc:
                if not exc.code:
                    ok = False
    res.add("state_machine_total", ok)
    rng = opts.rng("histories")
    worst = None
    for i in range(opts.n(40)):
        raw = holder_history(rng, opts.seed + i)
        good, slacks, r = holder_guarantee_run(raw)
        m = min((e["slack"] for e in slacks), default=None)
        worst = m if worst is None or (m is not None and m < worst) else worst
        if not good:
            res.add("holder_guarantee_e2e", False, m, {"scenario": raw, "slacks": slacks})
            break
        if not _escrow_closed(r):
            res.add("escrow_conservation", False, witness={"scenario": raw})
            break
    else:
        res.add("holder_guarantee_e2e", True, worst)
        res.add("escrow_conservation", True)
    rng = opts.rng("destruction")
    worst = None
    for i in range(opts.n(20)):
        raw = destruction_case(rng, opts.seed + i)
        d = destruction_run(raw)
        margin = -d["payoff"]
        worst = margin if worst is None else min(worst, margin)
        if not d["won"] or d["payoff"] >= 0 or d["compensation"] < d["holder_loss"]:
            res.add("destruction_deterred", False, margin, {"scenario": raw, "result": d})
            break
    else:
        res.add("destruction_deterred", True, worst)
    return res


def _escrow_closed(r: RunResult) -> bool:
    live = r.dao.control.aid if r.dao.control else None
    for (acct, _), v in r.book.balances.items():
        if v and acct.startswith("escrow/") and acct.split("/")[1] != live:
            return False
    return True


def suite_stochastic(opts: Options) -> SuiteResult:
    res = SuiteResult("stochastic")
    rng = opts.rng("stochastic")
    ok = True
    for i in range(opts.n(100)):
        p0 = _micros(rng, 1, 50)
        exe = ExecutionModel(p0 + rng.randint(-p0 // 2, 20_000_000), rng.randint(0, 80),
                             Fraction(rng.randint(0, 4), 4))
        n = rng.randint(1, 300)
        if not np.array_equal(stochastic_path(p0, exe, n, 0.0, i), deterministic_path(p0, exe, n)):
            ok = False
            res.add("sigma_zero_path", False, witness={"p0": p0, "exe": repr(exe), "n": n})
            break
        proc = RampProcess(p0, exe, 0.0, n)
        if not (proc.sample(1000, np.random.default_rng(i)) == proc.ramp_terminal()).all():
            ok = False
            res.add("sigma_zero_terminal", False, witness={"p0": p0, "exe": repr(exe)})
            break
    if ok:
        res.add("sigma_zero_path", True)
    mc = two_point_check(opts.seed, opts.n(100_000, 1000))
    res.add("two_point_estimate", mc["z"] <= 3, 3 - mc["z"], mc)
    worst = None
    for _ in range(opts.n(200)):
        bid, p0, q = random_bid(rng)
        if not validate_bid(bid, p0, q, Fraction(1, 2)) or bid.value_claim == p0:
            continue
        dep = required_deposits(bid, p0, q)
        bound = guaranteed_gain(bid, p0, q)
        est = ForfeitEstimate(Fraction(rng.randint(0, 2 * dep.value_deposit)),
                              Fraction(rng.randint(0, 2 * dep.surety_deposit + 1)), 0.0, 0.0, 1000)
        adj = adjust_deposits_stochastic(dep, est, bound)
        m = adj.deposits.value_deposit - bound
        worst = m if worst is None else min(worst, m)
        if m <= 0 or adj.deposits.surety_deposit < 0:
            res.add("adjustment_strict", False, m, {"bid": bid.__dict__, "p0": p0, "q": q})
            return res
    res.add("adjustment_strict", True, worst)
    return res


def two_point_check(seed: int, samples: int) -> dict:
    """Monte-Carlo expected forfeit against the exact two-point expectation."""
    fp = ForfeitParams(3_787_500_000, 10_000_000, 15_000_000, 750)
    d_s = 6_212_500_000
    proc = TwoPointProcess(8_000_000, 12_000_000, Fraction(1, 4))
    est = estimate_expected_forfeit(fp, d_s, 1000, proc, samples, seed)
    lo = forfeit_mod.forfeit_amount(fp, proc.low)
    hi = forfeit_mod.forfeit_amount(fp, proc.high)
    exact = (1 - proc.p_high) * lo + proc.p_high * hi
    se = est.value_se
    z = abs(float(est.value - exact)) / se if se else (0.0 if est.value == exact else float("inf"))
    return {"estimate": float(est.value), "exact": float(exact), "se": se, "z": z, "samples": samples}


def suite_flush(opts: Options) -> SuiteResult:
    res = SuiteResult("flush")
    rng = opts.rng("flush")
    worst = None
    for i in range(opts.n(10)):
        pair = flush_pair(rng, opts.seed + i)
        d = flush_pair_run(pair)
        if d is None or d["clearing_concealer"] <= d["p0"]:
            continue
        worst = d["gap"] if worst is None else min(worst, d["gap"])
        if d["gap"] <= 0:
            res.add("concealment_reversal", False, d["gap"], {"scenario": pair[0], "result": d})
            break
    else:
        res.add("concealment_reversal", True, worst)
    ok = True
    for _ in range(opts.n(100)):
        p0 = _micros(rng, 1, 20)
        n = rng.randint(0, 200)
        orders = linear_demand(p0 + _micros(rng, 0, 5), rng.randint(0, 50_000), n + rng.randint(0, 50), 6)
        reg = RegistrationPredicate(everyone=True).restrict("buyer0", "buyer3")
        out = run_token_auction(n, orders, reg, p0)
        if "buyer0" in out.allocations or "buyer3" in out.allocations:
            ok = False
        if sum(out.allocations.values()) != n or out.revenue - n * p0 != out.surplus:
            ok = False
    res.add("winner_exclusion_and_conservation", ok)
    return res


def suite_conservation(opts: Options, names: Optional[Sequence[str]] = None) -> SuiteResult:
    res = SuiteResult("conservation")
    for name in names or bundled_names():
        r = run(load_scenario(name, seed=opts.seed or None))
        res.add(f"replay:{name}", not r.problems, witness={"scenario": name, "problems": r.problems[:5]})
        stray = [e.kind for e in r.book.events
                 if e.kind not in EXOGENOUS and any(WORLD in (m.src, m.dst) for m in e.moves)]
        res.add(f"closed_economy:{name}", not stray, witness={"scenario": name, "kinds": sorted(set(stray))})
        res.add(f"escrow_closed:{name}", _escrow_closed(r), witness={"scenario": name})
    # a steep forfeit profile makes the clamp bind when X falls to P0
    raw = clamp_witness()
    try:
        r = run(load_scenario(raw))
        row = r.summary["settlements"][-1]
        d_v = next(e for e in r.book.events if e.kind == "escrow_lock").info["D_v"]
        ok = not r.problems and row["value_forfeit"] <= d_v and _escrow_closed(r)
        res.add("forfeit_within_deposit", ok, d_v - row["value_forfeit"],
                {"scenario": raw, "problems": r.problems[:5]})
    except (LedgerError, ValueError) as exc:
        res.add("forfeit_within_deposit", False, witness={"scenario": raw, "error": str(exc)})
    return res


def clamp_witness() -> dict:
    return {
        "name": "clamp_witness", "seed": 1, "horizon": 4, "end": "settle",
        "dao": {"q": 1000, "price": "10", "t_m": "1/2", "auction_ticks": 0,
                "delta": {"kind": "linear", "base": 1, "slope": "50"}},
        "holders": [{"id": "h0", "tokens": 500}, {"id": "h1", "tokens": 450}],
        "agents": [{"id": "alice", "behavior": "scripted", "tokens": 50, "cash": "30000",
                    "bid": {"S": "15", "R": "1000", "toehold": 50}}],
        "price_process": {"kind": "series", "points": [[0, "10"]]},
        "events": [{"tick": 1, "kind": "auction", "initiator": "alice"}],
    }


def suite_determinism(opts: Options, names: Optional[Sequence[str]] = None) -> SuiteResult:
    res = SuiteResult("determinism")
    for name in names or bundled_names():
        cfg = load_scenario(name, seed=opts.seed or None)
        a = run(cfg, record_states=True)
        b = run(load_scenario(name, seed=opts.seed or None))
        res.add(f"byte_identical:{name}", a.ledger == b.ledger, witness={"scenario": name})
        ok = True
        for t, live, status in a.states:
            rep = replay(a.book.events, until_tick=t)
            if rep.balances != live or rep.status != status:
                ok = False
                res.add(f"replay_state:{name}", False, witness={"scenario": name, "tick": t})
                break
        if ok:
            res.add(f"replay_state:{name}", True)
    return res


SUITES: dict[str, Callable[[Options], SuiteResult]] = {
    "identities": suite_identities,
    "forfeit": suite_forfeit,
    "truthfulness": suite_truthfulness,
    "auction": suite_auction,
    "lifecycle": suite_lifecycle,
    "stochastic": suite_stochastic,
    "flush": suite_flush,
    "conservation": suite_conservation,
    "determinism": suite_determinism,
}


def run_suites(names: Optional[Sequence[str]] = None, opts: Options = Options()) -> list[SuiteResult]:
    out = []
    for name in names or SUITES:
        if name not in SUITES:
            raise ConfigError([f"unknown suite {name!r}"])
        t0 = time.perf_counter()
        with mutated(opts):
            try:
                res = SUITES[name](opts)
            except (LedgerError, ArithmeticError, ValueError) as exc:
                res = SuiteResult(name)
                res.add("completed", False, witness={"error": f"{type(exc).__name__}: {exc}"})
        res.seconds = time.perf_counter() - t0
        out.append(res)
    return out


def margin_rows(results: Sequence[SuiteResult]) -> list[dict]:
    return [{"suite": c.suite, "check": c.name, "ok": c.ok,
             "margin": "" if c.margin is None else c.margin} for r in results for c in r.checks]
