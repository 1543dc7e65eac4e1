from fractions import Fraction

import pytest
from hypothesis import given, settings, strategies as st

from contestable.core import (
    Bid,
    BidRejected,
    auction_parameter,
    auction_parameter_by_share,
    check_bid,
    deposit_share,
    freezeout_fraction,
    freezeout_tokens,
    guaranteed_gain,
    required_deposits,
    validate_bid,
)

from conftest import m

HALF = Fraction(1, 2)


def test_running_example_parameters(running_bid):
    assert freezeout_fraction(running_bid, m(10), 1000) == Fraction(1, 5)
    assert freezeout_tokens(running_bid, m(10), 1000) == 200
    assert deposit_share(running_bid, m(10), 1000) == Fraction(1, 4)
    assert auction_parameter(running_bid, m(10), 1000) == m(3750)
    assert auction_parameter_by_share(running_bid, m(10), 1000) == m(3750)


def test_running_example_deposits(running_bid):
    d = required_deposits(running_bid, m(10), 1000)
    assert d.token_deposit == 250
    assert d.value_deposit == m("3787.5")
    assert d.purchase_deposit == m(2000)
    assert d.surety_deposit == m("6212.5")
    assert d.cash_total == m(12000)


def test_flush_purchase_deposit(running_bid):
    assert required_deposits(running_bid, m(10), 1000, flush_sale=True).purchase_deposit == m(9500)


def test_value_deposit_strict_at_zero_gain():
    bid = Bid("z", m(10), 0, 0)
    d = required_deposits(bid, m(10), 1000)
    assert d.value_deposit == 1 > guaranteed_gain(bid, m(10), 1000)


@pytest.mark.parametrize("bid,reason", [
    (Bid("x", m(9), 0, 0), "value_claim_below_reserve"),
    (Bid("x", m(15), 0, 1001), "invalid_toehold"),
    (Bid("x", m(10), m(1), 0), "degenerate_claim"),
    (Bid("x", m(15), m(2600), 0), "market_size"),
    (Bid("x", m(15), m(-300), 50), "negative_freezeout_exceeds_toehold"),
])
def test_rejection_reasons(bid, reason):
    v = validate_bid(bid, m(10), 1000, HALF)
    assert not v and v.reason == reason
    with pytest.raises(BidRejected) as exc:
        check_bid(bid, m(10), 1000, HALF)
    assert exc.value.reason == reason


def test_funding_checks(running_bid):
    assert validate_bid(running_bid, m(10), 1000, HALF, tokens=49).reason == "insufficient_toehold"
    assert validate_bid(running_bid, m(10), 1000, HALF, cash=m(11999)).reason == "underfunded_deposits"
    assert validate_bid(running_bid, m(10), 1000, HALF, cash=m(12000), tokens=50)


def test_negative_freeze_out_within_toehold():
    bid = Bid("x", m(15), m(-250), 100)
    assert validate_bid(bid, m(10), 1000, HALF)
    assert freezeout_tokens(bid, m(10), 1000) == -50


bids = st.builds(
    lambda p0, gain, h, frac: (p0, gain, h, frac),
    st.integers(1, 50_000_000), st.integers(1, 30_000_000), st.integers(0, 500), st.fractions(0, 1),
)


@settings(max_examples=300)
@given(bids)
def test_two_forms_of_auction_parameter_agree(args):
    p0, gain, h, frac = args
    q = 1000
    r = int(frac * (q // 2 - h) * gain) if h <= q // 2 else 0
    bid = Bid("b", p0 + gain, r, min(h, q // 2))
    assert auction_parameter(bid, p0, q) == auction_parameter_by_share(bid, p0, q)


@settings(max_examples=300)
@given(bids, st.fractions(0, 1), st.fractions(Fraction(1, 1000), Fraction(1, 2)))
def test_deposit_properties(args, gamma, eps):
    p0, gain, h, frac = args
    q = 1000
    h = min(h, q // 2)
    r = int(frac * (q // 2 - h) * gain)
    bid = Bid("b", p0 + gain, r, h)
    d = required_deposits(bid, p0, q, gamma, eps)
    assert d.value_deposit > guaranteed_gain(bid, p0, q)
    assert required_deposits(bid, p0, q, min(gamma + Fraction(1, 10), 1), eps).surety_deposit <= d.surety_deposit
    assert required_deposits(bid, p0, q, gamma, eps * 2).surety_deposit <= d.surety_deposit
    more = Bid("b", p0 + gain, r + gain, h)
    assert required_deposits(more, p0, q, gamma, eps).purchase_deposit >= d.purchase_deposit
