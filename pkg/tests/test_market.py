import logging
from fractions import Fraction

import numpy as np
import pytest

from contestable.core import Bid, guaranteed_gain, required_deposits
from contestable.forfeit import ForfeitParams, forfeit_amount
from contestable.market import (
    ExecutionModel,
    ForfeitEstimate,
    RampProcess,
    TwoPointProcess,
    adjust_deposits_stochastic,
    deterministic_path,
    estimate_expected_forfeit,
    forfeit_array,
    stochastic_path,
    surety_forfeit_array,
)

from conftest import m

FP = ForfeitParams(m("3787.5"), m(10), m(15), 750)


@pytest.mark.parametrize("completion", [Fraction(0), Fraction(1, 2), Fraction(1)])
def test_zero_volatility_is_the_ramp(completion):
    exe = ExecutionModel(m(15), 20, completion)
    for n in (1, 5, 20, 60):
        assert np.array_equal(stochastic_path(m(10), exe, n, 0.0, 3), deterministic_path(m(10), exe, n))
    proc = RampProcess(m(10), exe, 0.0, 60)
    assert (proc.sample(1000, np.random.default_rng(0)) == proc.ramp_terminal()).all()


def test_ramp_reaches_partial_target():
    exe = ExecutionModel(m(14), 10, Fraction(1, 2))
    path = deterministic_path(m(10), exe, 30)
    assert path[0] == m(10) and path[-1] == m(12) == exe.terminal(m(10))


def test_noisy_path_is_seeded():
    exe = ExecutionModel(m(15), 20)
    a = stochastic_path(m(10), exe, 50, 0.05, np.random.default_rng(4))
    b = stochastic_path(m(10), exe, 50, 0.05, np.random.default_rng(4))
    assert np.array_equal(a, b) and not np.array_equal(a, deterministic_path(m(10), exe, 50))


def test_vector_forfeit_matches_scalar():
    xs = np.array([m(0), m(9), m(10), m(12), m(15), m(16)])
    assert forfeit_array(FP, xs).tolist() == [forfeit_amount(FP, int(x)) for x in xs]
    xs = np.array([m(10), m(2)])
    assert surety_forfeit_array(m("6212.5"), m("3787.5"), m(10), 1000, xs).tolist() == [0, m("4212.5")]
    assert surety_forfeit_array(m("6212.5"), m(500), m(10), 1000, xs).tolist() == [0, m("6212.5")]


def test_two_point_estimate_within_three_standard_errors():
    proc = TwoPointProcess(m(8), m(12), Fraction(1, 4))
    est = estimate_expected_forfeit(FP, m("6212.5"), 1000, proc, 100_000, 5)
    exact = Fraction(3, 4) * FP.value_deposit + Fraction(1, 4) * forfeit_amount(FP, m(12))
    assert abs(float(est.value - exact)) <= 3 * est.value_se
    with pytest.raises(ValueError):
        estimate_expected_forfeit(FP, 0, 1000, proc, 10, 5)


def test_adjustment_clamps_and_warns(caplog):
    bid = Bid("alice", m(15), m(1000), 50)
    dep = required_deposits(bid, m(10), 1000)
    bound = guaranteed_gain(bid, m(10), 1000)
    est = ForfeitEstimate(Fraction(m(100)), Fraction(0), 0.0, 0.0, 1000)
    with caplog.at_level(logging.WARNING):
        adj = adjust_deposits_stochastic(dep, est, bound)
    assert adj.value_clamped and adj.deposits.value_deposit == m("3750.000001")
    assert "clamped" in caplog.text
    small = ForfeitEstimate(Fraction(m(10)), Fraction(m(1)), 0.0, 0.0, 1000)
    adj = adjust_deposits_stochastic(dep, small, bound)
    assert not adj.value_clamped
    assert adj.deposits.value_deposit == m("3777.5") and adj.deposits.surety_deposit == m("6211.5")
