"""Drive a scenario tick by tick and summarize the result."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .ledger import CASH, TOKEN, WORLD, Book, Move, replay
from .lifecycle import ControlState, Dao, DaoParams, Status
from .market import stochastic_path
from .scenario import ScenarioConfig, build_orders


class PriceDriver:
    """Spot price per tick.

    ``series`` scenarios follow their listed points (piecewise constant).
    ``execution`` scenarios stay flat until a control party is installed and
    then follow the ramp its execution produces, with optional noise; the
    price freezes when control ends.
    """

    def __init__(self, cfg: ScenarioConfig):
        self.cfg = cfg
        self.segment: Optional[np.ndarray] = None
        self.seg_start = 0
        self.n_segments = 0
        self.last = cfg.price

    def on_install(self, ctrl: ControlState, tick: int) -> None:
        if self.cfg.process["kind"] != "execution" or ctrl.execution is None:
            return
        length = max(self.cfg.horizon - tick, 1)
        exe = ctrl.execution
        start = self.last
        sigma = self.cfg.process["sigma"]
        rng = np.random.default_rng([self.cfg.seed, self.n_segments])
        self.segment = stochastic_path(start, exe, length, sigma, rng)
        self.seg_start = tick
        self.n_segments += 1

    def price(self, tick: int, dao: Dao) -> int:
        if self.cfg.process["kind"] == "series":
            p = self.cfg.price
            for t, v in self.cfg.process["points"]:
                if t <= tick:
                    p = v
            self.last = p
            return p
        if dao.control is None:
            self.segment = None
        if self.segment is not None:
            k = tick - self.seg_start
            if 0 <= k < len(self.segment):
                self.last = int(self.segment[k])
        return self.last


@dataclass
class RunResult:
    cfg: ScenarioConfig
    dao: Dao
    book: Book
    prices: list[int]
    payoffs: list[dict]
    summary: dict
    problems: list[str] = field(default_factory=list)
    states: list[tuple[int, dict, Optional[str]]] = field(default_factory=list)

    @property
    def ledger(self) -> str:
        return self.book.to_jsonl()


def dao_params(cfg: ScenarioConfig) -> DaoParams:
    v = cfg.variants
    return DaoParams(
        q=cfg.q, t_m=cfg.t_m, gamma=cfg.gamma, epsilon=cfg.epsilon, delta=cfg.delta,
        window=cfg.window, run=cfg.run, control_period=cfg.control_period,
        auction_ticks=cfg.auction_ticks, increment=cfg.increment, r_raise=bool(v["r_raise"]),
        cap_rule=v["cap_rule"], flush_sale=bool(v["flush_sale"]), pool_target=cfg.pool_target,
        pool_supermajority=bool(v["pool_votes_supermajority"]),
        liquidity_redirect=bool(v["liquidity_redirect"]), reference=cfg.reference,
        reference_window=cfg.reference_window, mm_capacity=cfg.mm_capacity,
        bounty_prob=cfg.bounty_prob, distribution_delay=cfg.distribution_delay, adjust=cfg.adjust,
        demand_fn=build_orders(cfg), registration=cfg.registration, seed=cfg.seed,
    )


def genesis(book: Book, cfg: ScenarioConfig) -> None:
    moves = []
    for h in cfg.holders:
        moves.append(Move(WORLD, h.holder_id, TOKEN, h.tokens))
        moves.append(Move(WORLD, h.holder_id, CASH, h.cash))
    for a in cfg.agents:
        moves.append(Move(WORLD, a["id"], TOKEN, a["tokens"]))
        moves.append(Move(WORLD, a["id"], CASH, a["cash"]))
    book.post(0, "genesis", moves, cause="endowments", info={"scenario": cfg.name, "seed": cfg.seed})


def run(cfg: ScenarioConfig, *, record_states: bool = False) -> RunResult:
    """Simulate ``cfg`` from genesis to the horizon.

    With ``record_states`` the live balances and status are captured after
    every tick so a replay of the ledger can be compared against them.
    """
    book = Book()
    agents = cfg.build_agents()
    dao = Dao(dao_params(cfg), book, agents)
    driver = PriceDriver(cfg)
    dao.on_install.append(driver.on_install)
    genesis(book, cfg)
    by_tick: dict[int, list[dict]] = {}
    for ev in cfg.events:
        by_tick.setdefault(int(ev["tick"]), []).append(ev)
    prices = []
    states = []
    for t in range(cfg.horizon):
        price = driver.price(t, dao)
        prices.append(price)
        dao.dispatch("tick", t, price=price)
        for ev in by_tick.get(t, []):
            _apply_event(dao, ev, t, agents)
        if cfg.end == "settle" and t == cfg.horizon - 1 and dao.status is Status.CONTROL:
            dao.dispatch("settle", t)
        if record_states:
            states.append((t, {k: v for k, v in sorted(book.balances.items()) if v}, book.status))
    check = replay(book.events)
    payoffs = payoff_rows(book, cfg, prices)
    summary = summarize(cfg, dao, prices, payoffs, check.problems)
    return RunResult(cfg, dao, book, prices, payoffs, summary, list(check.problems), states)


def _apply_event(dao: Dao, ev: dict, t: int, agents) -> None:
    kind = ev["kind"]
    if kind == "auction":
        init = agents[ev["initiator"]] if ev.get("initiator") else None
        bidders = [agents[b] for b in ev.get("bidders", [])]
        dao.dispatch("open_auction", t, initiator=init, bidders=bidders)
    elif kind == "abandon":
        dao.dispatch("abandon", t)
    elif kind == "settle":
        dao.dispatch("settle", t)
    elif kind == "periodic":
        bidders = [agents[b] for b in ev.get("bidders", [])]
        dao.dispatch("periodic", t, bidders=bidders)
    elif kind == "trade":
        n = int(ev["tokens"])
        price = int(ev["price"])
        dao.book.post(t, "trade", [Move(ev["from"], ev["to"], TOKEN, n), Move(ev["to"], ev["from"], CASH, n * price)],
                      cause="secondary market", info={"tokens": n, "price": price})


def identities(cfg: ScenarioConfig) -> list[str]:
    return [h.holder_id for h in cfg.holders] + [a["id"] for a in cfg.agents]


def wealth(book: Book, party: str, mark: int) -> int:
    cash = book.balance(party, CASH)
    tokens = book.balance(party, TOKEN)
    for (acct, asset), v in book.balances.items():
        if acct.startswith("escrow/") and acct.split("/")[2] == party:
            if asset == CASH:
                cash += v
            else:
                tokens += v
    return cash + tokens * mark


def payoff_rows(book: Book, cfg: ScenarioConfig, prices: list[int]) -> list[dict]:
    mark = prices[-1] if prices else cfg.price
    start = {h.holder_id: h.cash + h.tokens * cfg.price for h in cfg.holders}
    start.update({a["id"]: a["cash"] + a["tokens"] * cfg.price for a in cfg.agents})
    received: dict[str, int] = {}
    for ev in book.events:
        if ev.kind in ("value_forfeit", "surety_forfeit", "surplus_distribution"):
            for m in ev.moves:
                received[m.dst] = received.get(m.dst, 0) + m.amount
    roles = {a["id"]: a["behavior"] for a in cfg.agents}
    rows = []
    for party in identities(cfg):
        end = wealth(book, party, mark)
        rows.append({"party": party, "role": roles.get(party, "holder"),
                     "cash": book.balance(party, CASH), "tokens": book.balance(party, TOKEN),
                     "start_value": start[party], "end_value": end, "payoff": end - start[party],
                     "forfeits_received": received.get(party, 0)})
    return rows


def summarize(cfg: ScenarioConfig, dao: Dao, prices, payoffs, problems) -> dict:
    clears = [e.info for e in dao.book.events if e.kind == "auction_clear"]
    holder_rows = [r for r in payoffs if r["role"] == "holder"]
    return {
        "scenario": cfg.name,
        "seed": cfg.seed,
        "ticks": len(prices),
        "final_price": prices[-1] if prices else cfg.price,
        "status": dao.status.value,
        "controller": dao.control.controller if dao.control else None,
        "auctions": [{"auction": c["auction"], "winner": c["winner"], "A": c["A"], "A1": c["A1"],
                      "A2": c["A2"]} for c in clears],
        "settlements": dao.settlements,
        "holder_forfeits": sum(r["forfeits_received"] for r in holder_rows),
        "holder_payoff": sum(r["payoff"] for r in holder_rows),
        "events": len(dao.book.events),
        "replay_ok": not problems,
    }
