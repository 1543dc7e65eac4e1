import pytest

from contestable.lifecycle import (
    EVENTS,
    Dao,
    Status,
    SuccessCriterion,
    TransitionError,
    check_success_termination,
    transition,
)
from contestable.scenario import load_scenario
from contestable.simulate import run

from conftest import m


def test_transition_table_is_total():
    for st in Status:
        for ev in EVENTS:
            try:
                assert callable(getattr(Dao, transition(st, ev)))
            except TransitionError as exc:
                assert exc.code


@pytest.mark.parametrize("status,event,code", [
    (Status.AUCTION, "open_auction", "auction_in_progress"),
    (Status.OPEN, "close_auction", "no_auction_in_progress"),
    (Status.OPEN, "settle", "not_in_control_period"),
    (Status.AUCTION, "abandon", "auction_in_progress"),
    (Status.OPEN, "explode", "unknown_event"),
])
def test_transition_errors(status, event, code):
    with pytest.raises(TransitionError) as exc:
        transition(status, event)
    assert exc.value.code == code


def test_success_criterion():
    crit = SuccessCriterion(m(15), window=4, run=2)
    assert check_success_termination([m(14), m(15), m(16), m(15)], crit)
    assert not check_success_termination([m(15), m(15), m(15)], crit)
    assert not check_success_termination([m(16), m(14), m(16), m(14)], crit)
    with pytest.raises(ValueError):
        SuccessCriterion(m(15), window=2, run=3)


def test_running_settlement_pays_forfeit_to_holders():
    r = run(load_scenario("running"))
    (row,) = r.summary["settlements"]
    assert row["kind"] == "settle" and row["X"] == m(12)
    assert row["value_forfeit"] == m("2250.000001") and row["surety_forfeit"] == 0
    assert sum(row["payouts"].values()) == row["value_forfeit"]
    assert r.summary["status"] == "Open" and not r.problems


@pytest.mark.parametrize("price,s,case,amount", [
    ("12", "13", 1, m(1500)),
    ("8", "9", 2, m("3787.5")),
    ("9", "11", 3, m(3000)),
])
def test_transitional_settlement(price, s, case, amount):
    r = run(load_scenario("transitional", overrides={
        "price_process.points": [[0, "10"], [30, price]], "agents.1.bid.S": s}))
    (row,) = r.summary["settlements"]
    assert (row["kind"], row["case"], row["value_forfeit"]) == ("auction_lost", case, amount)
    assert r.summary["controller"] == "bob"


def test_abandonment_settles_at_reference_price():
    events = [{"tick": 1, "kind": "auction", "initiator": "alice"}, {"tick": 40, "kind": "abandon"}]
    r = run(load_scenario("transitional", overrides={"events": events}))
    (row,) = r.summary["settlements"]
    assert row["kind"] == "abandon" and row["value_forfeit"] == m(2250)


def test_periodic_reset_costs_the_incumbent_nothing():
    r = run(load_scenario("periodic"))
    resets = [s for s in r.summary["settlements"] if s["kind"] == "reset"]
    assert resets and all(s["value_forfeit"] == 0 and s["surety_forfeit"] == 0 for s in resets)
    assert r.summary["controller"] == "keeper"


def test_destruction_is_compensated():
    r = run(load_scenario("destruction"))
    raider = next(p for p in r.payoffs if p["party"] == "raider")
    (row,) = r.summary["settlements"]
    assert raider["payoff"] == -m(3600)
    assert row["value_forfeit"] + row["surety_forfeit"] == m(6000)
    assert r.summary["holder_payoff"] > 0


def test_underwater_treasury_liquidation_succeeds():
    r = run(load_scenario("treasury_underwater"))
    assert r.summary["auctions"][0]["winner"] == "liquidator"
    assert r.summary["settlements"][0]["kind"] == "success"


def test_every_escrow_closes_after_settlement():
    r = run(load_scenario("running"))
    assert not any(v for (acct, _), v in r.book.balances.items() if acct.startswith("escrow/"))
