"""Append-only double-entry ledger.

Every economic effect is a :class:`LedgerEvent` whose moves transfer an amount
of one asset (``"cash"`` in micro-units or ``"token"`` in whole tokens) from
one account to another, so each event nets to zero per asset by construction.
Exogenous money (agent endowments, plan costs, outside short gains) enters and
leaves through the ``world`` account.

The event stream serializes to JSON Lines with sorted keys, which makes
ledgers from identical runs byte-identical and lets :func:`replay` rebuild
balances and lifecycle status from disk.
"""
from __future__ import annotations

import json
from collections import defaultdict
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Any, Iterable, Iterator, Optional

CASH = "cash"
TOKEN = "token"
ASSETS = (CASH, TOKEN)

WORLD = "world"
TREASURY = "dao/treasury"
BURN = "burn"
MARKET_MAKER = "market_maker"

# accounts allowed to go negative: the outside world, the DAO's liability and
# the backstop market maker, whose funding sits outside the model
UNBOUNDED = frozenset({WORLD, TREASURY, MARKET_MAKER})


class LedgerError(RuntimeError):
    """A move would overdraw an account or the stream is malformed."""


@dataclass(frozen=True)
class Move:
    src: str
    dst: str
    asset: str
    amount: int

    def to_json(self) -> dict:
        return {"from": self.src, "to": self.dst, "asset": self.asset, "amount": self.amount}


@dataclass(frozen=True)
class LedgerEvent:
    seq: int
    tick: int
    kind: str
    moves: tuple[Move, ...] = ()
    cause: str = ""
    info: dict = field(default_factory=dict)
    status: Optional[str] = None

    def to_json(self) -> dict:
        d = {
            "seq": self.seq,
            "tick": self.tick,
            "kind": self.kind,
            "moves": [m.to_json() for m in self.moves],
            "cause": self.cause,
            "info": self.info,
        }
        if self.status is not None:
            d["status"] = self.status
        return d

    @classmethod
    def from_json(cls, d: dict) -> "LedgerEvent":
        moves = tuple(Move(m["from"], m["to"], m["asset"], int(m["amount"])) for m in d.get("moves", ()))
        return cls(int(d["seq"]), int(d["tick"]), d["kind"], moves, d.get("cause", ""),
                   d.get("info", {}), d.get("status"))


def _plain(value: Any) -> Any:
    if isinstance(value, Fraction):
        return str(value)
    if isinstance(value, dict):
        return {str(k): _plain(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_plain(v) for v in value]
    if hasattr(value, "item") and callable(value.item):  # numpy scalars
        return value.item()
    return value


def escrow(auction_id: str, party: str, kind: str) -> str:
    return f"escrow/{auction_id}/{party}/{kind}"


class Book:
    """Balances keyed by ``(account, asset)`` plus the event log."""

    def __init__(self, strict: bool = True):
        self.balances: dict[tuple[str, str], int] = defaultdict(int)
        self.events: list[LedgerEvent] = []
        self.status: Optional[str] = None
        self.strict = strict

    def balance(self, account: str, asset: str = CASH) -> int:
        return self.balances.get((account, asset), 0)

    def post(self, tick: int, kind: str, moves: Iterable[Move] = (), *, cause: str = "",
             info: Optional[dict] = None, status: Optional[str] = None) -> LedgerEvent:
        moves = tuple(m for m in moves if m.amount)
        for m in moves:
            if m.asset not in ASSETS:
                raise LedgerError(f"unknown asset {m.asset!r}")
            if m.amount < 0:
                raise LedgerError(f"negative move {m}")
        if self.strict:
            _check_cover(self.balances, moves)
        ev = LedgerEvent(len(self.events), tick, kind, moves, cause, _plain(info or {}), status)
        _apply(self.balances, moves)
        if status is not None:
            self.status = status
        self.events.append(ev)
        return ev

    def transfer(self, tick: int, kind: str, src: str, dst: str, asset: str, amount: int,
                 **kw) -> LedgerEvent:
        return self.post(tick, kind, [Move(src, dst, asset, amount)], **kw)

    def accounts(self, prefix: str = "", asset: Optional[str] = None) -> dict[str, int]:
        out = {}
        for (acct, a), v in self.balances.items():
            if v and acct.startswith(prefix) and (asset is None or a == asset):
                out[acct] = out.get(acct, 0) + v
        return dict(sorted(out.items()))

    def holders(self) -> dict[str, int]:
        """Free token balances of every identity (no escrow, sinks or world)."""
        return {
            a: v for (a, asset), v in sorted(self.balances.items())
            if asset == TOKEN and v > 0 and not a.startswith("escrow/")
            and a not in (WORLD, BURN, TREASURY)
        }

    def to_jsonl(self) -> str:
        return "".join(json.dumps(e.to_json(), sort_keys=True, separators=(",", ":")) + "\n"
                       for e in self.events)

    def write(self, path) -> Path:
        path = Path(path)
        path.write_text(self.to_jsonl())
        return path


def _check_cover(balances, moves) -> None:
    pending: dict[tuple[str, str], int] = defaultdict(int)
    for m in moves:
        pending[(m.src, m.asset)] -= m.amount
        pending[(m.dst, m.asset)] += m.amount
    for key, delta in pending.items():
        if key[0] in UNBOUNDED or delta >= 0:
            continue
        if balances.get(key, 0) + delta < 0:
            raise LedgerError(f"{key[0]} cannot cover {-delta} {key[1]} (has {balances.get(key, 0)})")


def _apply(balances, moves) -> None:
    for m in moves:
        balances[(m.src, m.asset)] -= m.amount
        balances[(m.dst, m.asset)] += m.amount


def read_jsonl(path) -> Iterator[LedgerEvent]:
    with open(path) as fh:
        for n, line in enumerate(fh):
            line = line.strip()
            if not line:
                continue
            try:
                yield LedgerEvent.from_json(json.loads(line))
            except (KeyError, ValueError, TypeError) as exc:
                raise LedgerError(f"line {n + 1}: {exc}") from exc


@dataclass
class ReplayResult:
    balances: dict[tuple[str, str], int]
    status: Optional[str]
    ticks: int
    events: int
    problems: list[str]

    @property
    def ok(self) -> bool:
        return not self.problems


def replay(events: Iterable[LedgerEvent], *, until_tick: Optional[int] = None) -> ReplayResult:
    """Rebuild balances and status from a stream, checking it as it goes.

    Checked: consecutive sequence numbers, non-decreasing ticks, no overdrawn
    account, and a constant token supply outside ``world`` at the end of every
    tick once the genesis events are done (tokens can be burned but never
    created or lost).
    """
    balances: dict[tuple[str, str], int] = defaultdict(int)
    status = None
    problems: list[str] = []
    last_tick = None
    n = 0
    supply = None

    def close_tick(t):
        nonlocal supply
        now = -balances.get((WORLD, TOKEN), 0)
        if supply is None:
            supply = now
        elif now != supply:
            problems.append(f"tick {t}: token supply {now} != {supply}")

    for ev in events:
        if until_tick is not None and ev.tick > until_tick:
            break
        if ev.seq != n:
            problems.append(f"event {n}: sequence number {ev.seq}")
        if last_tick is not None and ev.tick < last_tick:
            problems.append(f"event {ev.seq}: tick goes back to {ev.tick}")
        if last_tick is not None and ev.tick != last_tick:
            close_tick(last_tick)
        try:
            _check_cover(balances, ev.moves)
        except LedgerError as exc:
            problems.append(f"event {ev.seq}: {exc}")
        _apply(balances, ev.moves)
        if ev.status is not None:
            status = ev.status
        last_tick = ev.tick
        n += 1
    if last_tick is not None:
        close_tick(last_tick)
    for asset in ASSETS:
        total = sum(v for (a, s), v in balances.items() if s == asset)
        if total:
            problems.append(f"{asset} does not net to zero across accounts: {total}")
    clean = {k: v for k, v in sorted(balances.items()) if v}
    return ReplayResult(clean, status, (last_tick + 1) if last_tick is not None else 0, n, problems)
