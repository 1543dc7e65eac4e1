"""Brute-force best responses that certify the closed-form optimal bid.

The grid search is exact: for each candidate value claim ``S`` the profit is
multiplied through by ``S - P0`` so every comparison is an integer one, and the
smallest admissible surplus claim ``R`` on the grid that still breaks even is
found by a vectorized bisection (profit is non-decreasing in ``R``).
"""
from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import Any, Optional, Sequence

import numpy as np

from .core import DEFAULT_EPSILON, Bid, BusinessPlan
from .forfeit import STANDARD_DELTA
from .money import Money
from .strategies import PlanFamily, best_plan, model_profit, optimal_bid

INT64_SAFE = 1 << 62


@dataclass(frozen=True)
class OracleResult:
    level: Optional[Money]        # strongest break-even A found on the grid
    bid: Optional[Bid]
    plan: Optional[BusinessPlan]
    optimal_level: Optional[Money]  # psi* of the closed-form bid
    cell: Money

    @property
    def margin(self) -> Optional[Money]:
        if self.level is None or self.optimal_level is None:
            return None
        return self.level - self.optimal_level

    @property
    def certified(self) -> bool:
        if self.optimal_level is None:
            return self.level is None
        return self.level is not None and self.margin <= self.cell


def _dtype(bound: int):
    return np.int64 if bound < INT64_SAFE else object


def _scaled_profit(v, c, h, q, p0, s, r, delta, eps: Fraction):
    """profit * (S - P0) for arrays ``s``/``r`` (S strictly above P0)."""
    g = s - p0
    a = (q - h) * g - r
    base = h * (v - p0) * g + r * (v - p0) - c * g
    num, den = eps.numerator + eps.denominator, eps.denominator
    d_v = np.maximum(-((-a * num) // den), a + 1)
    if v < p0:
        return base - d_v * g
    d = delta(s, v)
    phi = np.where(s > v, a * (s - v) + d * g, 0)  # reaching S ends in success
    return base - np.minimum(phi, d_v * g)


def _strongest_for_plan(plan: BusinessPlan, h: int, p0: Money, q: int, t_m: Fraction,
                        s_grid: np.ndarray, r_step: Money, delta, eps):
    v, c = plan.value, plan.cost
    smax = int(s_grid.max()) - p0
    bound = 8 * q * smax * (smax + abs(v - p0) + 1) + 4 * c * smax + (1 << 40)
    bound = max(bound, (t_m.numerator * q + t_m.denominator * h) * smax)
    dt = _dtype(bound)
    s = s_grid.astype(dt)
    g = s - p0
    r_hi = ((t_m.numerator * q - t_m.denominator * h) * g) // t_m.denominator
    lo = -((h * g) // r_step)          # ceil(-h g / r_step)
    hi = r_hi // r_step
    live = hi >= lo
    ok_hi = _scaled_profit(v, c, h, q, p0, s, hi * r_step, delta, eps) >= 0
    live &= ok_hi
    if not live.any():
        return None
    s, lo, hi = s[live], lo[live], hi[live]
    ok_lo = _scaled_profit(v, c, h, q, p0, s, lo * r_step, delta, eps) >= 0
    # invariant: hi feasible; lo infeasible unless ok_lo
    lo = np.where(ok_lo, lo - 1, lo)
    while True:
        gap = hi - lo
        if not (gap > 1).any():
            break
        mid = lo + gap // 2
        ok = _scaled_profit(v, c, h, q, p0, s, mid * r_step, delta, eps) >= 0
        hi = np.where(ok & (gap > 1), mid, hi)
        lo = np.where(~ok & (gap > 1), mid, lo)
    r = hi * r_step
    a = (q - h) * (s - p0) - r
    k = int(np.argmax(a)) if dt is np.int64 else max(range(len(a)), key=lambda i: (a[i], -i))
    return int(a[k]), int(s[k]), int(r[k])


def s_grid_for(family: PlanFamily, p0: Money, s_step: Money, s_max: Optional[Money] = None) -> np.ndarray:
    vmax = max((p.value for p in family.plans), default=p0)
    top = s_max if s_max is not None else max(2 * vmax, p0 + s_step)
    grid = np.arange(p0 + s_step, top + 1, s_step, dtype=np.int64)
    extra = [p.value for p in family.plans if p.value > p0]
    return np.unique(np.concatenate([grid, np.array(extra, dtype=np.int64)]))


def brute_force_best_response(family: PlanFamily, toehold: int, p0: Money, q: int, t_m: Fraction, *,
                              delta=STANDARD_DELTA, epsilon: Fraction = DEFAULT_EPSILON,
                              s_step: Money = 1000, r_step: Money = 1000,
                              s_max: Optional[Money] = None) -> OracleResult:
    """Strongest break-even bid over every (plan, S, R) on the grids.

    Compares it with the closed-form optimal bid; ``certified`` holds when the
    grid never beats it by more than one cell of ``A``.
    """
    s_grid = s_grid_for(family, p0, s_step, s_max)
    best = None
    for plan in family.plans:
        hit = _strongest_for_plan(plan, toehold, p0, q, t_m, s_grid, r_step, delta, epsilon)
        if hit is not None and (best is None or hit[0] > best[0][0]):
            best = (hit, plan)
    choice = best_plan(family, p0, q, t_m)
    opt = choice.surplus if choice else None
    if best is None:
        return OracleResult(None, None, None, opt, r_step)
    (a, s, r), plan = best
    return OracleResult(a, Bid("oracle", s, r, toehold), plan, opt, r_step)


def best_response_at(family: PlanFamily, level: Money, toehold: int, p0: Money, q: int, *,
                     delta=STANDARD_DELTA, s_step: Money = 1000,
                     s_max: Optional[Money] = None) -> tuple[Fraction, Bid, BusinessPlan]:
    """Argmax-profit bid at a fixed auction level, over every plan and grid ``S``.

    Ties go to the lower ``S`` and then to the earlier plan.
    """
    s_grid = s_grid_for(family, p0, s_step, s_max)
    best = None
    for i, plan in enumerate(family.plans):
        for s in s_grid.tolist():
            bid = Bid("oracle", s, (q - toehold) * (s - p0) - level, toehold)
            prof = model_profit(plan, bid, p0, q, delta=delta)
            key = (prof, -s, -i)
            if best is None or key > best[0]:
                best = (key, bid, plan)
    return best[0][0], best[1], best[2]


@dataclass(frozen=True)
class EqualPayoff:
    value_claim: Money
    surplus_claim: Fraction
    level: Fraction
    gap: Fraction          # level minus the truthful level at the same payoff
    delta: int


def overclaim_check(plan: BusinessPlan, toehold: int, p0: Money, q: int, claims: Sequence[Money], *,
                profit: Money = 0, delta=STANDARD_DELTA) -> list[EqualPayoff]:
    """For each ``S > V`` find the surplus claim paying the same as ``S = V``.

    Exact rationals throughout.  Profit is affine in ``R`` on the ``S > V``
    branch, so two secant evaluations land on the root exactly; the root is
    then re-evaluated to confirm the payoff match.
    """
    ref = optimal_bid(plan, toehold, p0, q, profit=profit)
    ref_level = (q - toehold) * (plan.value - p0) - ref.surplus_claim
    ref_profit = model_profit(plan, ref, p0, q, delta=delta)
    out = []
    for s in claims:
        if s <= plan.value:
            continue

        def f(r):
            bid = Bid("probe", s, r, toehold)
            return _model_profit_frac(plan, bid, p0, q, delta) - ref_profit

        r0, r1 = Fraction(ref.surplus_claim), Fraction(ref.surplus_claim + (s - p0) * q)
        f0, f1 = f(r0), f(r1)
        root = r1 - f1 * (r1 - r0) / (f1 - f0)
        if f(root) != 0:
            raise ArithmeticError(f"secant missed the equal-payoff claim at S={s}")
        level = (q - toehold) * (s - p0) - root
        out.append(EqualPayoff(s, root, level, level - ref_level, int(delta(s, plan.value))))
    return out


def _model_profit_frac(plan, bid, p0, q, delta):
    """model_profit with a rational surplus claim and no deposit clamp."""
    v, s, r, h = plan.value, bid.value_claim, Fraction(bid.surplus_claim), bid.toehold
    a = (q - h) * (s - p0) - r
    gain = (h + r / (s - p0)) * (v - p0) - plan.cost
    phi = a * (s - v) / (s - p0) + delta(s, v) if p0 <= v <= s else 0
    return gain - phi


def certificate_rows(results: Sequence[tuple[str, OracleResult]]) -> list[dict[str, Any]]:
    return [
        {"family": name, "oracle_A": r.level, "optimal_A": r.optimal_level, "margin": r.margin,
         "cell": r.cell, "certified": r.certified}
        for name, r in results
    ]


__all__ = ["EqualPayoff", "OracleResult", "best_response_at", "brute_force_best_response",
           "certificate_rows", "overclaim_check", "s_grid_for"]
