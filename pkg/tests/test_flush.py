import pytest

from contestable.flush import (
    Order,
    RegistrationPredicate,
    linear_demand,
    orders_from_config,
    registration_from_config,
    revised_purchase_deposit,
    run_token_auction,
)
from contestable.ledger import BURN, MARKET_MAKER, TOKEN
from contestable.scenario import load_scenario
from contestable.simulate import run

from conftest import m

ALL = RegistrationPredicate(everyone=True)


def test_revised_purchase_deposit():
    assert revised_purchase_deposit(50, m(10), 1000) == m(9500)


def test_linear_demand_clears_at_marginal_limit():
    orders = linear_demand(m(13), m("0.002"), 500)
    out = run_token_auction(500, orders, ALL, m(10))
    assert out.clearing == m(13) - m("0.002") * 499
    assert sum(out.allocations.values()) == 500 and out.market_maker == 0
    assert out.surplus == (out.clearing - m(10)) * 500


def test_shortfall_goes_to_market_maker_at_fallback():
    orders = [Order("a", 3, m(12)), Order("b", 2, m(11))]
    out = run_token_auction(10, orders, ALL, m(10))
    assert out.allocations == {"a": 3, "b": 2, MARKET_MAKER: 5}
    assert out.clearing == m(10) and out.surplus == 0


def test_registration_rules():
    orders = [Order("winner", 5, m(20)), Order("a", 5, m(12)), Order("b", 5, m(11))]
    reg = registration_from_config({"registered": ["a", "b", "winner"], "restricted": ["winner"]}, [])
    out = run_token_auction(5, orders, reg, m(10))
    assert out.allocations == {"a": 5} and out.clearing == m(12)
    only_b = RegistrationPredicate(frozenset({"b"}))
    assert run_token_auction(5, orders, only_b, m(10)).allocations == {"b": 5}
    assert registration_from_config(None, []).eligible("anyone")


def test_order_config():
    orders = orders_from_config({"kind": "orders", "orders": [{"bidder": "x", "quantity": 2, "limit": "11"}]}, 2)
    assert orders == [Order("x", 2, m(11))]
    with pytest.raises(ValueError):
        orders_from_config({"kind": "sealed"}, 1)
    with pytest.raises(ValueError):
        run_token_auction(-1, [], ALL, m(10))


def test_flush_sale_scenario_conserves_tokens():
    r = run(load_scenario("flush_sale"))
    assert not r.problems
    lock = next(e for e in r.book.events if e.kind == "escrow_lock")
    assert lock.info["D_p"] == revised_purchase_deposit(lock.info["toehold"], m(10), 1000)
    auc = next(e for e in r.book.events if e.kind == "token_auction")
    assert auc.info["clearing"] > m(10)
    supply = sum(v for (acct, asset), v in r.book.balances.items() if asset == TOKEN and acct != "world")
    assert supply == 1000
    assert r.book.balance(BURN, TOKEN) >= 0
