"""Plan families, optimal bids and bidding agents.

Every agent exposes the three hooks the auction clock needs: its strongest
level ``A*``, the bid it submits at any level, and the lowest level it will
accept after raising its surplus claim.  Behaviors other than ``truthful`` are
deliberate deviations used to probe the incentive properties.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from typing import Any, Iterable, Mapping, Optional, Sequence

import numpy as np

from .core import Bid, BidRejected, BusinessPlan
from .engine import AuctionContext
from .forfeit import STANDARD_DELTA
from .money import Money, ceil_frac, to_micros

BEHAVIORS = ("truthful", "overbidder", "underbidder", "colluder", "destroyer", "concealer", "scripted")


class ConcavityError(ValueError):
    pass


@dataclass(frozen=True)
class PlanFamily:
    """A finite set of plans, possibly the grid of a concave value curve."""

    plans: tuple[BusinessPlan, ...]
    curve: Optional[Mapping[str, Any]] = None

    @classmethod
    def of(cls, pairs: Iterable[tuple[Money, Money]]) -> "PlanFamily":
        return cls(tuple(BusinessPlan(v, c) for v, c in pairs))

    @classmethod
    def concave(cls, kind: str, base: Money, gain: Money, scale: Money, c_max: Money,
                points: int = 10_000) -> "PlanFamily":
        """Grid of ``V(C)`` on ``[0, c_max]`` for a smooth concave curve.

        ``saturating``: ``V = base + gain (1 - exp(-C / scale))``;
        ``sqrt``: ``V = base + gain sqrt(C / scale)``.  Values are rounded to
        micro-units after the concavity check on the unrounded curve.
        """
        if points < 3:
            raise ValueError("a curve needs at least three grid points")
        c = np.linspace(0, c_max, points)
        x = c / scale
        if kind == "saturating":
            v = base + gain * -np.expm1(-x)
        elif kind == "sqrt":
            v = base + gain * np.sqrt(x)
        else:
            raise ValueError(f"unknown curve kind {kind!r}")
        second = np.diff(v, 2)
        if not (second < 0).all() or not v[1] > v[0]:
            raise ConcavityError(f"{kind} curve is not strictly concave and increasing on its grid")
        cs = np.rint(c).astype(np.int64)
        vs = np.rint(v).astype(np.int64)
        plans = tuple(BusinessPlan(int(vv), int(cc)) for vv, cc in zip(vs, cs))
        spec = {"kind": kind, "base": base, "gain": gain, "scale": scale, "c_max": c_max,
                "points": points}
        return cls(plans, spec)

    def arrays(self) -> tuple[np.ndarray, np.ndarray]:
        return (np.array([p.value for p in self.plans], dtype=object),
                np.array([p.cost for p in self.plans], dtype=object))


@dataclass(frozen=True)
class PlanChoice:
    plan: BusinessPlan
    surplus: Money


def best_plan(family: PlanFamily, p0: Money, q: int, t_m: Fraction,
              constrained: bool = True) -> Optional[PlanChoice]:
    """Surplus-maximizing plan, optionally under the market size constraint.

    A plan can back a break-even bid only if ``C <= t_m (V - P0) q``.  Ties go
    to the cheaper plan, then to the lower value.
    """
    best = None
    for plan in family.plans:
        psi = plan.surplus(p0, q)
        if psi <= 0:
            continue
        if constrained and plan.cost > t_m * plan.gain(p0, q):
            continue
        key = (psi, -plan.cost, -plan.value)
        if best is None or key > best[0]:
            best = (key, plan)
    if best is None:
        return None
    return PlanChoice(best[1], best[0][0])


def optimal_bid(plan: BusinessPlan, toehold: int, p0: Money, q: int, t_m: Optional[Fraction] = None,
                profit: Money = 0, bidder: str = "") -> Bid:
    """The strongest bid earning exactly ``profit``: ``S = V``, ``A = psi - profit``."""
    if plan.surplus(p0, q) <= 0:
        raise BidRejected("no_surplus", "plan creates no surplus at this reserve")
    r = profit + plan.cost - (plan.value - p0) * toehold
    if t_m is not None and r > (t_m * q - toehold) * (plan.value - p0):
        raise BidRejected("surplus_claim_cap", "break-even claim exceeds the market size cap")
    return Bid(bidder, plan.value, r, toehold)


def market_floor(value_claim: Money, p0: Money, q: int, t_m: Fraction) -> Money:
    """Lowest A any bid with this value claim can reach: (1 - t_m)(S - P0) q."""
    return ceil_frac((1 - t_m) * (value_claim - p0) * q)


@dataclass
class Agent:
    """A bidding agent; ``behavior`` selects how its bid departs from truthful."""

    agent_id: str
    family: PlanFamily
    toehold: int = 0
    behavior: str = "truthful"
    arrival: int = 0
    params: dict = field(default_factory=dict)
    delta: Any = STANDARD_DELTA
    silent: bool = False

    def __post_init__(self):
        if self.behavior not in BEHAVIORS:
            raise ValueError(f"unknown behavior {self.behavior!r}")

    @property
    def bidder_id(self) -> str:
        return self.agent_id

    @property
    def declared(self) -> int:
        if self.behavior == "concealer":
            return self.toehold - int(self.params.get("hidden", 0))
        return self.toehold

    def choice(self, ctx: AuctionContext) -> Optional[PlanChoice]:
        return best_plan(self.family, ctx.p0, ctx.q, ctx.t_m)

    def value_claim(self, ctx: AuctionContext) -> Optional[Money]:
        if self.behavior == "scripted":
            return self.params["bid"].value_claim
        pc = self.choice(ctx)
        if pc is None:
            return None
        s = pc.plan.value
        if self.behavior == "overbidder":
            s += int(self.params.get("overbid", 0))
        return s

    def strongest(self, ctx: AuctionContext) -> Optional[Money]:
        """Break-even level before any behavioral shading."""
        if self.behavior == "scripted":
            bid: Bid = self.params["bid"]
            return (ctx.q - bid.toehold) * (bid.value_claim - ctx.p0) - bid.surplus_claim
        pc = self.choice(ctx)
        if pc is None:
            return None
        level = pc.surplus
        if self.behavior == "overbidder" and self.params.get("overbid", 0):
            s = pc.plan.value + int(self.params["overbid"])
            level -= int(self.delta(s, pc.plan.value))
        elif self.behavior == "underbidder":
            level += int(self.params.get("underbid", 0))
        elif self.behavior == "concealer":
            level += int(self.params.get("hidden", 0)) * (pc.plan.value - ctx.p0)
        return level

    def max_level(self, ctx: AuctionContext) -> Optional[Money]:
        if self.silent:
            return None
        level = self.strongest(ctx)
        if level is None or level <= 0:
            return None
        s = self.value_claim(ctx)
        if self.behavior != "scripted" and level < market_floor(s, ctx.p0, ctx.q, ctx.t_m):
            return None
        return level

    def bid_at(self, level: Money, ctx: AuctionContext) -> Bid:
        if self.behavior == "scripted":
            bid: Bid = self.params["bid"]
            return Bid(self.agent_id, bid.value_claim, bid.surplus_claim, bid.toehold)
        s = self.value_claim(ctx)
        h = self.declared
        return Bid(self.agent_id, s, (ctx.q - h) * (s - ctx.p0) - level, h)

    def floor_level(self, ctx: AuctionContext) -> Money:
        if self.behavior == "scripted":
            return self.strongest(ctx)
        s = self.value_claim(ctx)
        floor = market_floor(s, ctx.p0, ctx.q, ctx.t_m)
        if ctx.cap_rule == "net_of_toehold":
            pc = self.choice(ctx)
            if pc is not None:
                n = pc.plan.gain(ctx.p0, ctx.q)
                toehold_gain = self.toehold * (pc.plan.value - ctx.p0)
                cap = n - toehold_gain - pc.plan.cost - floor
                floor = max(floor, self.strongest(ctx) - max(cap, 0))
        return floor

    def target_value(self, ctx: AuctionContext) -> Optional[Money]:
        """Per-token value the agent's execution actually drives toward."""
        if self.behavior == "destroyer":
            return int(self.params["destroy_to"])
        if self.behavior == "scripted":
            return int(self.params.get("execute_to", self.params["bid"].value_claim))
        pc = self.choice(ctx)
        return pc.plan.value if pc else None

    def plan_cost(self, ctx: AuctionContext) -> Money:
        if self.behavior == "scripted":
            return int(self.params.get("cost", 0))
        pc = self.choice(ctx)
        return pc.plan.cost if pc else 0


def collusive_bids(group: Sequence[Agent], ctx: AuctionContext) -> list[Agent]:
    """Silence every group member except the one with the highest ``A*``.

    Ties go to the earliest arrival, matching the auction's own rule.
    """
    live = [(a.max_level(ctx), a) for a in group]
    live = [(lvl, a) for lvl, a in live if lvl is not None]
    if not live:
        return []
    top = min(live, key=lambda t: (-t[0], t[1].arrival, t[1].agent_id))[1]
    for a in group:
        a.silent = a is not top
    return [top]


def apply_collusion(agents: Sequence[Agent], ctx: AuctionContext) -> None:
    for a in agents:
        a.silent = False
    groups: dict[str, list[Agent]] = {}
    for a in agents:
        g = a.params.get("group")
        if g is not None:
            groups.setdefault(str(g), []).append(a)
    for members in groups.values():
        collusive_bids(members, ctx)


def adversarial_strategies(profile: Mapping[str, Any], family: PlanFamily, **kw) -> Agent:
    """Build an agent for a deviation tag: underbidder, overbidder, destroyer or concealer."""
    tag = profile.get("behavior")
    if tag not in ("underbidder", "overbidder", "destroyer", "concealer", "colluder"):
        raise ValueError(f"unknown adversarial behavior {tag!r}")
    params = {k: v for k, v in profile.items() if k not in ("behavior", "id", "toehold")}
    return Agent(profile.get("id", tag), family, int(profile.get("toehold", 0)), tag, params=params, **kw)


def model_profit(plan: BusinessPlan, bid: Bid, p0: Money, q: int, value_deposit: Optional[Money] = None,
                 delta=STANDARD_DELTA) -> Fraction:
    """Exact expected profit of a winning bid whose plan lands at ``X = V``.

    Model-level (fractional freeze-out, no token rounding): the toehold and
    frozen-out tokens gain ``V - P0`` each, the plan costs ``C`` and the value
    deposit forfeit at ``X = V`` is paid out.  An outcome at or above the
    claim triggers success termination and forfeits nothing.
    """
    v, s, r, h = plan.value, bid.value_claim, bid.surplus_claim, bid.toehold
    if s == p0:
        tf_q = Fraction(0)
    else:
        tf_q = Fraction(r, s - p0)
    gain = (h + tf_q) * (v - p0) - plan.cost
    a = (q - h) * (s - p0) - r
    if v >= s:
        phi = 0  # reaching the claim ends control by success termination
    elif v >= p0:
        phi = (Fraction(a) * (s - v) / (s - p0) if s != p0 else 0) + delta(s, v)
    else:
        phi = None
    if value_deposit is None:
        value_deposit = max(ceil_frac(Fraction(a) * Fraction(101, 100)), a + 1)
    if phi is None or phi > value_deposit:
        phi = value_deposit
    return gain - max(phi, 0)


def pick_curve_grid(family: PlanFamily, points: int) -> PlanFamily:
    """Thin a fine curve grid to about ``points`` plans, keeping both ends."""
    n = len(family.plans)
    if n <= points:
        return family
    idx = sorted(set(np.linspace(0, n - 1, points).round().astype(int).tolist()))
    return PlanFamily(tuple(family.plans[i] for i in idx), family.curve)


def curve_from_config(spec: Mapping[str, Any]) -> PlanFamily:
    return PlanFamily.concave(
        spec.get("kind", "saturating"),
        to_micros(str(spec["base"])),
        to_micros(str(spec["gain"])),
        to_micros(str(spec["scale"])),
        to_micros(str(spec["c_max"])),
        int(spec.get("points", 10_000)),
    )


def liquidity_gap(family: PlanFamily, p0: Money, q: int, t_m: Fraction) -> Optional[Money]:
    """Surplus lost to the market size constraint, or None if nothing is feasible."""
    free = best_plan(family, p0, q, t_m, constrained=False)
    bound = best_plan(family, p0, q, t_m, constrained=True)
    if free is None or bound is None:
        return None
    return free.surplus - bound.surplus


__all__ = [
    "Agent", "BEHAVIORS", "ConcavityError", "PlanChoice", "PlanFamily", "adversarial_strategies",
    "apply_collusion", "best_plan", "collusive_bids", "liquidity_gap", "curve_from_config",
    "market_floor", "model_profit", "optimal_bid", "pick_curve_grid",
]
