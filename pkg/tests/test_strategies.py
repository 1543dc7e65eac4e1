from fractions import Fraction

import pytest

from contestable.core import BidRejected
from contestable.engine import AuctionContext
from contestable.strategies import (
    Agent,
    ConcavityError,
    PlanFamily,
    adversarial_strategies,
    apply_collusion,
    best_plan,
    liquidity_gap,
    curve_from_config,
    market_floor,
    model_profit,
    optimal_bid,
    pick_curve_grid,
)
from contestable.core import BusinessPlan

from conftest import m

HALF = Fraction(1, 2)
CTX = AuctionContext(m(10), 1000, HALF)


def test_optimal_bid_break_even_and_with_profit():
    plan = BusinessPlan(m(14), m(500))
    assert optimal_bid(plan, 50, m(10), 1000).surplus_claim == m(300)
    bid = optimal_bid(plan, 50, m(10), 1000, profit=m(1000))
    assert bid.surplus_claim == m(1300) and bid.value_claim == m(14)
    assert model_profit(plan, optimal_bid(plan, 50, m(10), 1000), m(10), 1000) == 0


def test_optimal_bid_rejections():
    with pytest.raises(BidRejected):
        optimal_bid(BusinessPlan(m(10), m(1)), 0, m(10), 1000)
    with pytest.raises(BidRejected):
        optimal_bid(BusinessPlan(m(11), m(900)), 0, m(10), 1000, t_m=HALF)


def test_best_plan_respects_market_size():
    fam = PlanFamily.of([(m(14), m(500)), (m(20), m(9000)), (m(12), m(100))])
    pc = best_plan(fam, m(10), 1000, HALF)
    assert pc.plan == BusinessPlan(m(14), m(500)) and pc.surplus == m(3500)
    free = best_plan(fam, m(10), 1000, HALF, constrained=False)
    assert free.plan.value == m(14)
    assert best_plan(PlanFamily.of([(m(9), 0)]), m(10), 1000, HALF) is None


def test_market_floor():
    assert market_floor(m(15), m(10), 1000, HALF) == m(2500)


def test_agent_levels_by_behavior():
    fam = PlanFamily.of([(m(14), m(500))])
    assert Agent("t", fam).max_level(CTX) == m(3500)
    assert Agent("u", fam, behavior="underbidder", params={"underbid": m(100)}).max_level(CTX) == m(3600)
    conc = Agent("c", fam, 100, "concealer", params={"hidden": 60})
    assert conc.declared == 40
    assert conc.max_level(CTX) == m(3500) + 60 * m(4)
    silent = Agent("s", fam)
    silent.silent = True
    assert silent.max_level(CTX) is None


def test_agent_bid_matches_level():
    fam = PlanFamily.of([(m(14), m(500))])
    a = Agent("t", fam, 50)
    bid = a.bid_at(m(3000), CTX)
    assert (1000 - 50) * (bid.value_claim - m(10)) - bid.surplus_claim == m(3000)


def test_collusion_silences_weaker_member():
    strong = Agent("c1", PlanFamily.of([(m(15), m(1500))]), behavior="colluder", params={"group": "g"})
    weak = Agent("c2", PlanFamily.of([(m(14), m(800))]), behavior="colluder", params={"group": "g"})
    apply_collusion([strong, weak], CTX)
    assert not strong.silent and weak.silent


def test_adversarial_factory():
    fam = PlanFamily.of([(m(14), m(500))])
    a = adversarial_strategies({"behavior": "overbidder", "id": "o", "overbid": m(1)}, fam)
    assert a.behavior == "overbidder" and a.value_claim(CTX) == m(15)
    with pytest.raises(ValueError):
        adversarial_strategies({"behavior": "angel"}, fam)


def test_concave_family_and_gap():
    fam = curve_from_config({"kind": "saturating", "base": 10, "gain": 10, "scale": 2000,
                             "c_max": 8000, "points": 2001})
    assert len(fam.plans) == 2001
    assert liquidity_gap(fam, m(10), 1000, Fraction(1, 4)) > 0
    assert len(pick_curve_grid(fam, 100).plans) <= 100
    with pytest.raises(ConcavityError):
        PlanFamily.concave("saturating", m(10), -m(10), m(2000), m(8000), 50)


def test_model_profit_success_forfeits_nothing():
    plan = BusinessPlan(m(16), m(500))
    bid = optimal_bid(BusinessPlan(m(15), m(500)), 0, m(10), 1000)
    assert model_profit(plan, bid, m(10), 1000) == Fraction(bid.surplus_claim, m(5)) * m(6) - m(500)
