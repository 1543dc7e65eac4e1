"""Token price paths and Monte-Carlo estimates of expected forfeits.

Deterministic paths are integer ramps from ``P0`` toward the value the control
party's execution reaches.  Stochastic paths multiply the ramp by a mean-one
log-normal factor ``exp(sigma W_t - sigma^2 t / 2)`` and round to micro-units;
with ``sigma = 0`` the factor is exactly 1.0 and the result is bit-identical to
the deterministic ramp without any special case.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, replace
from fractions import Fraction
from typing import Protocol

import numpy as np

from .core import DepositSet
from .forfeit import ForfeitParams
from .money import Money, floor_frac

log = logging.getLogger(__name__)

CHUNK = 1 << 16


@dataclass(frozen=True)
class ExecutionModel:
    value: Money                 # V the plan aims for
    duration: int = 60           # ticks to complete
    completion: Fraction = Fraction(1)

    def __post_init__(self):
        if not 0 <= self.completion <= 1:
            raise ValueError("completion must lie in [0, 1]")
        if self.duration < 0:
            raise ValueError("duration must be non-negative")

    def terminal(self, p0: Money) -> Money:
        return p0 + floor_frac(self.completion * (self.value - p0))


def deterministic_path(p0: Money, exe: ExecutionModel, length: int) -> np.ndarray:
    """Linear ramp to ``P0 + completion (V - P0)`` over the duration, then flat."""
    gain = exe.terminal(p0) - p0
    t = np.minimum(np.arange(length, dtype=np.int64), exe.duration)
    if exe.duration == 0:
        return np.full(length, p0 + gain, dtype=np.int64)
    return p0 + (gain * t) // exe.duration


def _normals(rng: np.random.Generator, n: int) -> np.ndarray:
    parts = []
    left = n
    while left > 0:
        k = min(left, CHUNK)
        parts.append(rng.standard_normal(k))
        left -= k
    return np.concatenate(parts) if parts else np.zeros(0)


def stochastic_path(p0: Money, exe: ExecutionModel, length: int, sigma: float,
                    seed: int | np.random.Generator) -> np.ndarray:
    if sigma < 0:
        raise ValueError("sigma must be >= 0")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    ramp = deterministic_path(p0, exe, length)
    z = _normals(rng, length)
    z[0] = 0.0
    w = np.cumsum(z)
    t = np.arange(length, dtype=float)
    factor = np.exp(sigma * w - 0.5 * sigma * sigma * t)
    return np.maximum(np.rint(ramp * factor), 0).astype(np.int64)


class TerminalProcess(Protocol):
    def sample(self, n: int, rng: np.random.Generator) -> np.ndarray: ...

    def mean(self) -> float: ...


@dataclass(frozen=True)
class RampProcess:
    """Terminal price after ``horizon`` ticks of a (possibly noisy) ramp."""

    p0: Money
    exe: ExecutionModel
    sigma: float
    horizon: int

    def ramp_terminal(self) -> Money:
        return int(deterministic_path(self.p0, self.exe, self.horizon + 1)[-1])

    def sample(self, n: int, rng: np.random.Generator) -> np.ndarray:
        z = _normals(rng, n)
        s = self.sigma * np.sqrt(self.horizon)
        factor = np.exp(s * z - 0.5 * s * s)
        return np.maximum(np.rint(self.ramp_terminal() * factor), 0).astype(np.int64)

    def mean(self) -> float:
        return float(self.ramp_terminal())


@dataclass(frozen=True)
class TwoPointProcess:
    low: Money
    high: Money
    p_high: Fraction

    def sample(self, n: int, rng: np.random.Generator) -> np.ndarray:
        parts = []
        left = n
        while left > 0:
            k = min(left, CHUNK)
            parts.append(rng.random(k) < float(self.p_high))
            left -= k
        hit = np.concatenate(parts) if parts else np.zeros(0, dtype=bool)
        return np.where(hit, self.high, self.low).astype(np.int64)

    def mean(self) -> float:
        return float(self.low + self.p_high * (self.high - self.low))


def forfeit_array(fp: ForfeitParams, x: np.ndarray) -> np.ndarray:
    """Vectorized value-deposit forfeit, clamped like the scalar version."""
    x = np.asarray(x, dtype=np.int64)
    s = fp.value_claim
    mid = fp.retained * (s - x) + np.asarray(fp.delta(s, x), dtype=np.int64)
    raw = np.where(x > s, 0, np.where(x >= fp.p0, mid, fp.value_deposit))
    return np.clip(raw, 0, fp.value_deposit)


def surety_forfeit_array(d_s: Money, d_v: Money, p0: Money, q: int, x: np.ndarray) -> np.ndarray:
    """Surety forfeit when control ends unbid at price ``x`` (``S_w = P0_w = x``)."""
    h = np.maximum((p0 - x) * q, 0)
    h_star = np.maximum(h - d_v, 0)
    returned = np.maximum(np.maximum(d_s - h, d_s - h_star), 0)
    return d_s - returned


@dataclass(frozen=True)
class ForfeitEstimate:
    value: Fraction
    surety: Fraction
    value_se: float
    surety_se: float
    samples: int


def estimate_expected_forfeit(fp: ForfeitParams, d_s: Money, q: int, process: TerminalProcess,
                              n_samples: int, seed: int) -> ForfeitEstimate:
    """Monte-Carlo means of the value and surety forfeits at the horizon price."""
    if n_samples < 1000:
        raise ValueError("use at least 1000 samples")
    rng = np.random.default_rng(seed)
    x = process.sample(n_samples, rng)
    phi = forfeit_array(fp, x)
    sur = surety_forfeit_array(d_s, fp.value_deposit, fp.p0, q, x)

    def stats(a):
        total = int(a.sum())
        se = float(a.std(ddof=1) / np.sqrt(len(a))) if len(a) > 1 else 0.0
        return Fraction(total, len(a)), se

    v, v_se = stats(phi)
    s, s_se = stats(sur)
    return ForfeitEstimate(v, s, v_se, s_se, n_samples)


@dataclass(frozen=True)
class Adjustment:
    deposits: DepositSet
    value_clamped: bool
    surety_clamped: bool


def adjust_deposits_stochastic(deposits: DepositSet, estimate: ForfeitEstimate, bound: Money) -> Adjustment:
    """Lower D_v and D_s by their expected forfeits, keeping D_v above the bound."""
    cut_v = floor_frac(estimate.value)
    cut_s = floor_frac(estimate.surety)
    d_v = deposits.value_deposit - cut_v
    d_s = deposits.surety_deposit - cut_s
    v_clamped = d_v < bound + 1
    s_clamped = d_s < 0
    if v_clamped:
        log.warning("value deposit adjustment clamped at bound + 1 (%d)", bound + 1)
    if s_clamped:
        log.warning("surety deposit adjustment clamped at 0")
    out = replace(deposits, value_deposit=max(d_v, bound + 1), surety_deposit=max(d_s, 0))
    return Adjustment(out, v_clamped, s_clamped)
