import json

import pytest

from contestable.ledger import CASH, TOKEN, WORLD, Book, LedgerError, LedgerEvent, Move, read_jsonl, replay
from contestable.scenario import load_scenario
from contestable.simulate import run


def test_overdraft_is_refused():
    book = Book()
    book.post(0, "genesis", [Move(WORLD, "a", CASH, 5)])
    with pytest.raises(LedgerError):
        book.transfer(1, "pay", "a", "b", CASH, 6)
    with pytest.raises(LedgerError):
        book.transfer(1, "pay", "a", "b", "gold", 1)
    assert book.balance("a") == 5 and len(book.events) == 1


def test_jsonl_round_trip(tmp_path):
    r = run(load_scenario("running"))
    path = r.book.write(tmp_path / "ledger.jsonl")
    events = list(read_jsonl(path))
    assert [e.to_json() for e in events] == [e.to_json() for e in r.book.events]
    res = replay(events)
    assert res.ok and res.balances == {k: v for k, v in r.book.balances.items() if v}


def test_replay_detects_broken_streams():
    book = Book()
    book.post(0, "genesis", [Move(WORLD, "a", TOKEN, 10)])
    book.post(1, "move", [Move("a", "b", TOKEN, 4)])
    evs = list(book.events)
    assert not replay([evs[1]]).ok                       # overdraft, wrong sequence
    assert not replay([evs[0], LedgerEvent(1, 1, "mint", (Move("a", "b", TOKEN, 20),))]).ok
    assert not replay([evs[0], LedgerEvent(1, -1, "late")]).ok


def test_malformed_line(tmp_path):
    p = tmp_path / "bad.jsonl"
    p.write_text(json.dumps({"tick": 0}) + "\n")
    with pytest.raises(LedgerError):
        list(read_jsonl(p))


def test_runs_are_byte_identical():
    a = run(load_scenario("two_bidders"))
    b = run(load_scenario("two_bidders"))
    assert a.ledger == b.ledger


def test_replay_matches_live_state_every_tick():
    r = run(load_scenario("transitional"), record_states=True)
    for t, live, status in r.states[::7]:
        rep = replay(r.book.events, until_tick=t)
        assert rep.balances == live and rep.status == status
