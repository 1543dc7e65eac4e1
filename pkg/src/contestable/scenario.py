"""Scenario files: YAML in, validated :class:`ScenarioConfig` out.

Amounts are written in fiat units as strings (``"3787.5"``) and converted to
micro-units on load; shares are ratios (``"1/4"``) or decimals.  Unknown keys
are errors rather than silently ignored, since a typo in a variant flag would
otherwise change which mechanism runs.
"""
from __future__ import annotations

import os
from dataclasses import dataclass, field
from fractions import Fraction
from importlib import resources
from pathlib import Path
from typing import Any, Mapping, Optional

import yaml

from .core import Bid
from .flush import RegistrationPredicate, orders_from_config, registration_from_config
from .forfeit import ProfileError, check_delta_profile, delta_from_config
from .money import MoneyError, as_fraction, to_micros
from .strategies import BEHAVIORS, Agent, ConcavityError, PlanFamily, curve_from_config

SEED_ENV = "CONTESTABLE_SEED"

TOP_KEYS = {"name", "description", "seed", "horizon", "end", "dao", "holders", "agents", "variants",
            "price_process", "events", "demand", "registration", "adjust"}
DAO_KEYS = {"q", "price", "t_m", "gamma", "epsilon", "delta", "success", "control_period",
            "auction_ticks", "increment", "reference", "mm_capacity", "bounty_prob",
            "distribution_delay", "pool_target"}
VARIANT_KEYS = {"flush_sale", "r_raise", "cap_rule", "pool_votes_supermajority", "liquidity_redirect"}
AGENT_KEYS = {"id", "behavior", "tokens", "cash", "plans", "curve", "execution", "arrival", "params", "bid"}
PARAM_MONEY = {"overbid", "underbid", "short_gain", "destroy_to", "cost", "execute_to"}
PARAM_KEYS = PARAM_MONEY | {"hidden", "group", "periodic"}
EVENT_KINDS = {"auction", "abandon", "settle", "periodic", "trade"}
PROCESS_KEYS = {"kind", "sigma", "points"}


class ConfigError(ValueError):
    """Raised with every schema violation found, not just the first."""

    def __init__(self, problems: list[str]):
        super().__init__("; ".join(problems))
        self.problems = problems


@dataclass
class HolderSpec:
    holder_id: str
    tokens: int
    cash: int


@dataclass
class ScenarioConfig:
    name: str
    seed: int
    horizon: int
    end: str
    q: int
    price: int
    t_m: Fraction
    gamma: Fraction
    epsilon: Fraction
    delta: Any
    window: int
    run: int
    control_period: int
    auction_ticks: int
    increment: Optional[int]
    reference: str
    reference_window: int
    mm_capacity: Optional[int]
    bounty_prob: float
    distribution_delay: int
    pool_target: Fraction
    holders: list[HolderSpec]
    agents: list[dict]
    variants: dict
    process: dict
    events: list[dict]
    demand: Optional[dict]
    registration: RegistrationPredicate
    adjust: Optional[dict]
    raw: dict = field(default_factory=dict)

    def build_agents(self) -> dict[str, Agent]:
        """Fresh agent objects (agents carry per-run mutable state)."""
        return {a["id"]: _make_agent(a, self.delta) for a in self.agents}


def _money(value, path: str, problems: list[str], *, allow_none: bool = False) -> Optional[int]:
    if value is None and allow_none:
        return None
    try:
        return to_micros(str(value))
    except (MoneyError, ValueError, TypeError):
        problems.append(f"{path}: not an amount: {value!r}")
        return None


def _frac(value, path: str, problems: list[str], lo=None, hi=None, lo_open=False, hi_open=False):
    try:
        f = as_fraction(value)
    except (MoneyError, ValueError, TypeError):
        problems.append(f"{path}: not a fraction: {value!r}")
        return None
    if lo is not None and (f < lo or (lo_open and f == lo)):
        problems.append(f"{path}: {f} out of range")
    elif hi is not None and (f > hi or (hi_open and f == hi)):
        problems.append(f"{path}: {f} out of range")
    return f


def _unknown(d: Mapping, allowed: set, path: str, problems: list[str]) -> None:
    for k in d:
        if k not in allowed:
            problems.append(f"{path}: unknown key {k!r}")


def _make_agent(a: dict, delta) -> Agent:
    return Agent(a["id"], a["family"], a["tokens"], a["behavior"], a["arrival"], dict(a["params"]), delta)


def load_scenario(source, *, seed: Optional[int] = None, overrides: Optional[Mapping] = None) -> ScenarioConfig:
    """Parse and validate a scenario from a path, a bundled name or a mapping."""
    if isinstance(source, Mapping):
        raw = dict(source)
    else:
        path = resolve_scenario(source)
        try:
            raw = yaml.safe_load(path.read_text())
        except yaml.YAMLError as exc:
            raise ConfigError([f"{path}: {exc}"]) from exc
    if not isinstance(raw, dict):
        raise ConfigError(["scenario must be a mapping"])
    if overrides:
        raw = apply_overrides(raw, overrides)
    return validate(raw, seed=seed)


def apply_overrides(raw: dict, overrides: Mapping[str, Any]) -> dict:
    """Set dotted keys (``dao.t_m``) on a deep copy of ``raw``."""
    import copy

    out = copy.deepcopy(raw)
    for dotted, value in overrides.items():
        node = out
        parts = dotted.split(".")
        for p in parts[:-1]:
            if isinstance(node, list):
                node = node[int(p)]
            else:
                node = node.setdefault(p, {})
        last = parts[-1]
        if isinstance(node, list):
            node[int(last)] = value
        else:
            node[last] = value
    return out


def validate(raw: dict, *, seed: Optional[int] = None) -> ScenarioConfig:
    problems: list[str] = []
    _unknown(raw, TOP_KEYS, "scenario", problems)
    dao = raw.get("dao") or {}
    if not isinstance(dao, dict):
        raise ConfigError(["dao: must be a mapping"])
    _unknown(dao, DAO_KEYS, "dao", problems)

    if seed is None:
        seed = raw.get("seed")
    if seed is None and os.environ.get(SEED_ENV):
        seed = os.environ[SEED_ENV]
    if seed is None:
        problems.append(f"seed: missing (set it in the scenario, with --seed or via {SEED_ENV})")
    else:
        try:
            seed = int(seed)
        except (TypeError, ValueError):
            problems.append(f"seed: not an integer: {seed!r}")

    q = dao.get("q")
    if not isinstance(q, int) or q <= 0:
        problems.append(f"dao.q: must be a positive integer, got {q!r}")
        q = 1
    price = _money(dao.get("price"), "dao.price", problems)
    if price is not None and price <= 0:
        problems.append("dao.price: must be positive")
    t_m = _frac(dao.get("t_m", "1/2"), "dao.t_m", problems, 0, 1, lo_open=True, hi_open=True)
    gamma = _frac(dao.get("gamma", 0), "dao.gamma", problems, -1, 1)
    epsilon = _frac(dao.get("epsilon", "1/100"), "dao.epsilon", problems, 0, 1)
    pool_target = _frac(dao.get("pool_target", "1/2"), "dao.pool_target", problems, Fraction(1, 2), 1,
                        hi_open=True)
    delta = None
    try:
        delta = delta_from_config(dao.get("delta") or {})
        check_delta_profile(delta)
    except ProfileError as exc:
        problems.append(f"dao.delta: {exc}")
    except (KeyError, ValueError, MoneyError) as exc:
        problems.append(f"dao.delta: {exc}")
    success = dao.get("success") or {}
    window, run = int(success.get("window", 30)), int(success.get("run", 10))
    if not 0 < run <= window:
        problems.append("dao.success: need 0 < run <= window")
    ref = dao.get("reference") or {}
    if isinstance(ref, str):
        ref = {"kind": ref}
    reference = ref.get("kind", "spot")
    if reference not in ("spot", "average"):
        problems.append(f"dao.reference: unknown kind {reference!r}")
    increment = _money(dao.get("increment"), "dao.increment", problems, allow_none=True)
    bounty = float(dao.get("bounty_prob", 0.0))
    if not 0 <= bounty <= 1:
        problems.append("dao.bounty_prob: must lie in [0, 1]")

    variants = dict(raw.get("variants") or {})
    _unknown(variants, VARIANT_KEYS, "variants", problems)
    variants.setdefault("flush_sale", False)
    variants.setdefault("r_raise", True)
    variants.setdefault("cap_rule", "market_size")
    variants.setdefault("pool_votes_supermajority", False)
    variants.setdefault("liquidity_redirect", False)
    if variants["cap_rule"] not in ("market_size", "net_of_toehold"):
        problems.append(f"variants.cap_rule: unknown rule {variants['cap_rule']!r}")

    holders = _holders(raw.get("holders"), problems)
    agents = _agents(raw.get("agents") or [], problems)
    ids = [h.holder_id for h in holders] + [a["id"] for a in agents]
    if len(set(ids)) != len(ids):
        problems.append("holders/agents: duplicate identities")
    total = sum(h.tokens for h in holders) + sum(a["tokens"] for a in agents)
    if total != q:
        problems.append(f"holders/agents: hold {total} tokens, expected q={q}")

    process = dict(raw.get("price_process") or {"kind": "execution"})
    _unknown(process, PROCESS_KEYS, "price_process", problems)
    if process.get("kind", "execution") not in ("execution", "series"):
        problems.append(f"price_process.kind: unknown {process.get('kind')!r}")
    process.setdefault("kind", "execution")
    process["sigma"] = float(process.get("sigma", 0.0))
    if process["sigma"] < 0:
        problems.append("price_process.sigma: must be >= 0")
    if process["kind"] == "series":
        pts = []
        for i, pt in enumerate(process.get("points") or []):
            m = _money(pt[1], f"price_process.points[{i}]", problems)
            pts.append((int(pt[0]), m))
        process["points"] = sorted(pts)

    known = set(ids)
    events = []
    for i, ev in enumerate(raw.get("events") or []):
        kind = ev.get("kind")
        if kind not in EVENT_KINDS:
            problems.append(f"events[{i}]: unknown kind {kind!r}")
            continue
        for ref_key in ("initiator", "from", "to"):
            if ref_key in ev and ev[ref_key] not in known:
                problems.append(f"events[{i}].{ref_key}: undefined identity {ev[ref_key]!r}")
        for b in ev.get("bidders", []):
            if b not in known:
                problems.append(f"events[{i}].bidders: undefined agent {b!r}")
        ev = dict(ev)
        if kind == "trade":
            ev["price"] = _money(ev.get("price"), f"events[{i}].price", problems)
        events.append(ev)

    demand = raw.get("demand")
    if variants["flush_sale"] and not demand:
        problems.append("demand: required when variants.flush_sale is on")
    reg = registration_from_config(raw.get("registration"), ids)
    adjust = raw.get("adjust")

    horizon = int(raw.get("horizon", 400))
    end = raw.get("end", "hold")
    if end not in ("hold", "settle"):
        problems.append(f"end: must be hold or settle, got {end!r}")

    if problems:
        raise ConfigError(problems)
    return ScenarioConfig(
        name=str(raw.get("name", "scenario")), seed=seed, horizon=horizon, end=end, q=q, price=price,
        t_m=t_m, gamma=gamma, epsilon=epsilon, delta=delta, window=window, run=run,
        control_period=int(dao.get("control_period", 360)), auction_ticks=int(dao.get("auction_ticks", 7)),
        increment=increment, reference=reference, reference_window=int(ref.get("window", 5)),
        mm_capacity=dao.get("mm_capacity"), bounty_prob=bounty,
        distribution_delay=int(dao.get("distribution_delay", 0)), pool_target=pool_target,
        holders=holders, agents=agents, variants=variants, process=process, events=events,
        demand=demand, registration=reg, adjust=adjust, raw=raw,
    )


def _holders(spec, problems) -> list[HolderSpec]:
    if spec is None:
        return []
    if isinstance(spec, dict) and "generate" in spec:
        g = spec["generate"]
        count, tokens = int(g["count"]), int(g["tokens"])
        cash = _money(g.get("cash", 0), "holders.generate.cash", problems) or 0
        if count <= 0:
            problems.append("holders.generate.count: must be positive")
            return []
        prefix = g.get("prefix", "h")
        base, extra = divmod(tokens, count)
        width = len(str(count - 1))
        return [HolderSpec(f"{prefix}{i:0{width}d}", base + (1 if i < extra else 0), cash) for i in range(count)]
    out = []
    for i, h in enumerate(spec):
        cash = _money(h.get("cash", 0), f"holders[{i}].cash", problems) or 0
        out.append(HolderSpec(str(h["id"]), int(h.get("tokens", 0)), cash))
    return out


def _agents(spec, problems) -> list[dict]:
    out = []
    for i, a in enumerate(spec):
        path = f"agents[{i}]"
        _unknown(a, AGENT_KEYS, path, problems)
        behavior = a.get("behavior", "truthful")
        if behavior not in BEHAVIORS:
            problems.append(f"{path}.behavior: unknown {behavior!r}")
            continue
        params = dict(a.get("params") or {})
        _unknown(params, PARAM_KEYS, f"{path}.params", problems)
        for k in PARAM_MONEY & params.keys():
            params[k] = _money(params[k], f"{path}.params.{k}", problems)
        if "execution" in a:
            params["execution"] = dict(a["execution"])
        family = PlanFamily(())
        try:
            if "curve" in a:
                family = curve_from_config(a["curve"])
            elif "plans" in a:
                family = PlanFamily.of((to_micros(str(v)), to_micros(str(c))) for v, c in a["plans"])
        except (ConcavityError, ValueError, MoneyError, KeyError) as exc:
            problems.append(f"{path}: {exc}")
        if behavior == "scripted":
            b = a.get("bid") or {}
            s = _money(b.get("S"), f"{path}.bid.S", problems)
            r = _money(b.get("R"), f"{path}.bid.R", problems)
            if s is not None and r is not None:
                params["bid"] = Bid(str(a["id"]), s, r, int(b.get("toehold", 0)))
        elif behavior == "destroyer" and "destroy_to" not in params:
            problems.append(f"{path}.params.destroy_to: required for destroyer")
        out.append({
            "id": str(a["id"]), "behavior": behavior, "tokens": int(a.get("tokens", 0)),
            "cash": _money(a.get("cash", 0), f"{path}.cash", problems) or 0, "family": family,
            "arrival": int(a.get("arrival", i)), "params": params,
        })
    return out


def bundled_names() -> list[str]:
    root = resources.files("contestable") / "scenarios"
    return sorted(p.name[:-5] for p in root.iterdir() if p.name.endswith(".yaml"))


def resolve_scenario(source) -> Path:
    path = Path(source)
    if path.exists():
        return path
    cand = resources.files("contestable") / "scenarios" / f"{source}.yaml"
    if cand.is_file():
        return Path(str(cand))
    raise ConfigError([f"{source}: no such file or bundled scenario"])


def build_orders(cfg: ScenarioConfig):
    if not cfg.demand:
        return None
    return lambda quantity, p0: orders_from_config(cfg.demand, quantity)
