from fractions import Fraction

import pytest

from contestable.core import Bid, BidRejected
from contestable.engine import (
    AuctionContext,
    VotePool,
    closing_steps,
    open_auction,
    ranking_winner,
    run_english_auction,
    submit,
    surplus_raise,
    try_submit,
    vote_pool_resize,
)
from contestable.ledger import CASH, TOKEN, WORLD, Book, Move, replay
from contestable.scenario import load_scenario
from contestable.simulate import run
from contestable.strategies import Agent, PlanFamily

from conftest import m

HALF = Fraction(1, 2)


def _book(**cash):
    book = Book()
    moves = [Move(WORLD, "alice", TOKEN, 50), Move(WORLD, "h", TOKEN, 950)]
    moves += [Move(WORLD, who, CASH, m(v)) for who, v in cash.items()]
    book.post(0, "genesis", moves)
    return book


def _two_bidders(cap_rule="market_size", r_raise=True):
    book = _book(alice=30000, bob=30000)
    ctx = AuctionContext(m(10), 1000, HALF, cap_rule=cap_rule, r_raise=r_raise)
    alice = Agent("alice", PlanFamily.of([(m(14), m(500))]), 50)
    bob = Agent("bob", PlanFamily.of([]), 0, "scripted", params={"bid": Bid("bob", m(14), m(2000), 0)})
    state = open_auction(book, ctx, alice, 1)
    submit(book, state, bob, 1)
    return book, run_english_auction(book, state, 2)


@pytest.mark.parametrize("c,q_t,extra,votes", [
    (125, 1000, 751, 876),
    (125, 2000, 1751, 1876),
    (125, 250, 1, 126),
    (250, 1000, 501, 751),
])
def test_vote_pool(c, q_t, extra, votes):
    pool = VotePool(c, q_t)
    assert (pool.extra, pool.control_votes) == (extra, votes)
    assert pool.majority_ok()


def test_vote_pool_resize_and_supermajority():
    pool = vote_pool_resize(VotePool(125, 1000), 2000)
    assert pool.extra == 1751
    sup = VotePool(250, 1000, Fraction(2, 3))
    assert sup.extra == 1251 and sup.majority_ok()
    with pytest.raises(ValueError):
        vote_pool_resize(pool, -1)


def test_surplus_raise_rules():
    assert surplus_raise(m(3500), m(2000), m(2000), 1000) == m(1500) - 1000
    assert surplus_raise(m(3500), None, m(2000), 1000) == m(1500)
    assert surplus_raise(m(3500), m(2000), m(2200), 1000) == m(1300)
    assert surplus_raise(m(2000), m(2000), 0, 1000) == 0


def test_raise_capped_net_of_toehold():
    _, out = _two_bidders("net_of_toehold")
    assert out.ranking == [("alice", m(3500)), ("bob", m(2000))]
    assert out.raise_amount == m(1300)
    assert out.record.clearing == m(2200)


def test_raise_to_one_increment_above_runner_up():
    _, out = _two_bidders("market_size")
    assert out.record.clearing == m(2000) + 1000


def test_no_raise_keeps_strongest_level():
    book, out = _two_bidders(r_raise=False)
    assert out.record.clearing == m(3500) and out.raise_amount == 0
    assert not replay(book.events).problems


def test_loser_escrow_returned_in_full():
    book, _ = _two_bidders()
    assert book.balance("bob", CASH) == m(30000)
    assert not any(v for (acct, _), v in book.balances.items() if acct.startswith("escrow/a0/bob"))


def test_submit_rejects_underfunded_and_duplicates():
    book = _book(alice=100)
    ctx = AuctionContext(m(10), 1000, HALF)
    alice = Agent("alice", PlanFamily.of([(m(14), m(500))]), 50)
    with pytest.raises(BidRejected) as exc:
        open_auction(book, ctx, alice, 1)
    assert exc.value.reason == "underfunded_deposits"
    book = _book(alice=30000)
    state = open_auction(book, ctx, alice, 1)
    with pytest.raises(BidRejected):
        submit(book, state, alice, 1)
    assert try_submit(book, state, alice, 1) is None
    assert book.events[-1].kind == "bid_rejected"


def test_void_auction_without_bids():
    book = _book()
    state = open_auction(book, AuctionContext(m(10), 1000, HALF), None, 1)
    out = run_english_auction(book, state, 2)
    assert out.void and out.record is None


def test_tie_goes_to_earliest_arrival():
    assert ranking_winner([("b", 5, 2), ("a", 5, 3), ("c", 4, 0)]) == "b"
    assert ranking_winner([("b", 5, 2), ("a", 5, 2)]) == "a"


def test_freeze_out_and_vote_pool_on_close():
    book = Book()
    book.post(0, "genesis", [Move(WORLD, "alice", TOKEN, 50), Move(WORLD, "alice", CASH, m(30000)),
                             Move(WORLD, "big", TOKEN, 200)]
              + [Move(WORLD, f"h{i:02d}", TOKEN, 50) for i in range(15)])
    ctx = AuctionContext(m(10), 1000, HALF)
    alice = Agent("alice", PlanFamily.of([]), 50, "scripted", params={"bid": Bid("alice", m(15), m(1000), 50)})
    state = open_auction(book, ctx, alice, 1)
    out = run_english_auction(book, state, 2)
    close = closing_steps(book, out.record, 2)
    assert close.sold["big"] == 42
    assert sum(close.sold.values()) == 200
    assert close.entitled["big"] == 158
    assert close.pool.control_tokens == 250 and close.pool.majority_ok()
    assert not replay(book.events).problems


def test_two_truthful_bidders_scenario():
    r = run(load_scenario("two_bidders"))
    (a,) = r.summary["auctions"]
    assert a["winner"] == "alice"
    assert (a["A1"], a["A2"], a["A"]) == (m(3750), m(3000), m(3000) + 1000)


def test_colluders_submit_one_bid():
    r = run(load_scenario("collusion"))
    (a,) = r.summary["auctions"]
    bidders = {e.info["bidder"] for e in r.book.events if e.kind == "bid"}
    assert bidders == {"c1", "honest"}
    assert a["winner"] == "c1" and a["A2"] == m(2400)
    assert a["A"] == m(2500)  # held up by the winner's market floor
