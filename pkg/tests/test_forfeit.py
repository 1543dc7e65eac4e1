from fractions import Fraction

import pytest
from hypothesis import given, settings, strategies as st

from contestable.forfeit import (
    BandDelta,
    ConstantDelta,
    ForfeitParams,
    LinearDelta,
    ProfileError,
    baseline_loss_penalty,
    check_delta_profile,
    delta_from_config,
    forfeit_amount,
    forfeit_differential,
    surety_settlement,
    transitional_case,
    transitional_forfeit,
    value_forfeit,
)

from conftest import m

FP = ForfeitParams(m("3787.5"), m(10), m(15), 750)


def test_forfeit_on_the_running_example():
    assert forfeit_amount(FP, m(12)) == m("2250.000001")
    assert forfeit_amount(FP, m(15)) == 1
    assert forfeit_amount(FP, m(16)) == 0
    assert forfeit_amount(FP, m(9)) == FP.value_deposit


def test_forfeit_plus_refund_is_the_deposit():
    for x in (m(0), m(9), m(10), m(12), m(15), m(20)):
        out = value_forfeit(FP, x)
        assert out.forfeit_to_holders + out.refund_to_control == FP.value_deposit


def test_baseline_loss_penalty():
    assert baseline_loss_penalty(FP) == m("37.5")
    assert baseline_loss_penalty(ForfeitParams(m(7575), m(10), m(15), 750)) == m(3825)


def test_forfeit_differential():
    assert forfeit_differential(FP, m(13), m(12)) == m(1500)


@pytest.mark.parametrize("s_w,p_ref,case,amount", [
    (m(13), m(12), 1, m(1500)),
    (m(9), m(8), 2, m("3787.5")),
    (m(11), m(9), 3, m(3000)),
    (m(12), m(12), 1, m(2250)),      # abandonment at 12
    (m(10), m(10), 1, m(3750)),      # abandonment at P0
    (m(8), m(8), 2, m("3787.5")),    # abandonment below P0
])
def test_transitional_cases(s_w, p_ref, case, amount):
    assert transitional_case(FP.p0, s_w, p_ref) == case
    assert transitional_forfeit(FP, s_w, p_ref).forfeit_to_holders == amount


def test_reaffirmation_costs_nothing():
    for p_ref in (m(8), m(10), m(12), m(15)):
        assert transitional_forfeit(FP, m(15), p_ref).forfeit_to_holders == 0
        assert transitional_forfeit(FP, m(16), p_ref).forfeit_to_holders == 0


def test_surety_examples():
    assert surety_settlement(m("6212.5"), m("3787.5"), m(10), m(8), m(12), 1000) == (m("6212.5"), 0)
    assert surety_settlement(m("6212.5"), m(500), m(10), m(2), m(2), 1000) == (0, m("6212.5"))


def test_profiles_from_config():
    assert delta_from_config({}) == ConstantDelta(1)
    assert delta_from_config({"kind": "linear", "base": 2, "slope": "1/2"}) == LinearDelta(2, Fraction(1, 2))
    band = delta_from_config({"kind": "band", "base": 1, "bonus": 5, "lo": "11", "hi": "12"})
    assert band(m(15), m(11)) == 6 and band(m(15), m(13)) == 1
    with pytest.raises(ProfileError):
        delta_from_config({"kind": "cubic"})


def test_profile_guard():
    check_delta_profile(ConstantDelta(1))
    check_delta_profile(LinearDelta(1, Fraction(1, 100)), require_monotone=True)
    with pytest.raises(ProfileError):
        check_delta_profile(ConstantDelta(0))
    with pytest.raises(ProfileError):
        check_delta_profile(LinearDelta(-5, Fraction(0)))


def test_non_monotone_band_is_caught_only_when_asked():
    band = BandDelta(1, 10**12, m(50), m(60))
    check_delta_profile(band)
    with pytest.raises(ProfileError):
        check_delta_profile(band, require_monotone=True)


params = st.builds(
    lambda p0, gain, retained, extra: ForfeitParams(retained * gain + 1 + extra, p0, p0 + gain, retained),
    st.integers(1, 10**8), st.integers(0, 10**8), st.integers(0, 10**4), st.integers(0, 10**9),
)


@settings(max_examples=300)
@given(params, st.floats(0, 1))
def test_holder_guarantee_on_the_claim_range(fp, u):
    x = fp.p0 + int(u * (fp.value_claim - fp.p0))
    f = forfeit_amount(fp, x)
    assert x * fp.retained + f == fp.value_claim * fp.retained + 1


@settings(max_examples=200)
@given(params, st.integers(0, 3 * 10**8), st.integers(0, 3 * 10**8))
def test_transitional_is_bounded_and_case1_algebra(fp, s_w, p_ref):
    out = transitional_forfeit(fp, s_w, p_ref)
    assert 0 <= out.forfeit_to_holders <= fp.value_deposit
    if p_ref >= fp.p0:
        plain = forfeit_amount(fp, p_ref)
        credit = forfeit_amount(fp.with_claim(s_w), p_ref)
        assert out.forfeit_to_holders == max(plain - credit, 0)


@settings(max_examples=200)
@given(params)
def test_forfeit_non_increasing_in_x(fp):
    xs = range(fp.p0, fp.value_claim + 1, max((fp.value_claim - fp.p0) // 50, 1))
    vals = [forfeit_amount(fp, x) for x in xs]
    assert all(a >= b for a, b in zip(vals, vals[1:]))
