"""Acceptance criteria, one test each.

Each test prints a ``PASS`` or ``FAIL`` line with its measured numbers; the
lines are repeated in the pytest terminal summary.  Run the file directly
(``python3 tests/test_acceptance.py``) for the lines alone.
"""
import random
import sys
import time
from fractions import Fraction
from pathlib import Path

import numpy as np
import pytest

from contestable import verify
from contestable.market import ExecutionModel, RampProcess, deterministic_path, stochastic_path
from contestable.scenario import bundled_names, load_scenario
from contestable.simulate import run
from contestable.strategies import best_plan, liquidity_gap

sys.path.insert(0, str(Path(__file__).parent))
from conftest import ACCEPTANCE_LINES, m  # noqa: E402

SEED = 20240601
OPTS = verify.Options(seed=SEED)


def report(label: str, ok: bool, detail: str) -> None:
    line = f"{'PASS' if ok else 'FAIL'}  {label}: {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)
    assert ok, line


def test_c01_oracle_certificate():
    t0 = time.perf_counter()
    certs = verify.oracle_certificate(OPTS, 120)
    secs = time.perf_counter() - t0
    live = [(n, r) for n, r in certs if r.optimal_level is not None]
    kinds = {n.split(":")[1] for n, _ in live}
    failed = [n for n, r in certs if not r.certified]
    worst = max(r.margin for _, r in live)
    ok = len(live) >= 100 and not failed and kinds == {"curve", "finite"} and secs <= 300
    report("1 oracle certificate", ok,
           f"{len(live)} families with a feasible plan ({len(certs)} drawn), {len(failed)} beaten by more "
           f"than one cell, worst margin {worst} micros vs cell 1000, {secs:.1f}s")


def test_c02_overclaim_gap_both_directions():
    probes, bad = verify.overclaim_witnesses(OPTS, 200)
    exact = all(e.gap == -e.delta == -1 for e in probes)
    zero = verify.Options(seed=SEED, mutations=frozenset({"delta_zero"}))
    probes0, ties = verify.overclaim_witnesses(zero, 200)
    ok = bool(probes) and not bad and exact and len(ties) >= 1
    report("2 overclaim strictly loses", ok,
           f"{len(probes)} probes, all gaps exactly -1 micro: {exact}; with delta=0 "
           f"{len(ties)} of {len(probes0)} probes tie")


def test_c03_holder_guarantee():
    rng = random.Random(f"{SEED}:c3")
    bad, worst, share = [], None, 0
    for i in range(1000):
        raw = verify.holder_history(rng, SEED + i)
        ok, slacks, _ = verify.holder_guarantee_run(raw)
        if not ok:
            bad.append(raw)
        lo = min((s["slack"] for s in slacks), default=None)
        worst = lo if worst is None or (lo is not None and lo < worst) else worst
        share += sum(1 for s in slacks if s["slack"] > 0)
    report("3 holder guarantee", not bad,
           f"1000 histories, {len(bad)} violations, smallest per-holder slack {worst} micros, "
           f"slack total equals delta in every run, {share} holder shares carry the delta micro")


def _two_bidder_rows(n=150):
    rng = random.Random(f"{SEED}:c4")
    rows = [verify.two_bidder_run(verify.two_bidder_case(rng, SEED + i)) for i in range(n)]
    return [r for r in rows if r is not None]


def test_c04_stated_second_price_identity():
    rows = _two_bidder_rows()
    hits = [r for r in rows if r["stated_gap"] <= r["step"]]
    worst = max(rows, key=lambda r: r["stated_gap"])
    report("4 second-price identity min{(1-t_m)psi, A1-A2}", len(hits) == len(rows),
           f"{len(hits)} of {len(rows)} runs within one increment; worst gap "
           f"{float(worst['stated_gap']) / 1e6:.3f} where the market-size cap binds "
           f"(t_m={worst['t_m']}, psi={worst['psi'] / 1e6:.3f})")


def test_c04b_engine_second_price_identity():
    rows = _two_bidder_rows()
    hits = [r for r in rows if r["engine_gap"] <= r["step"]]
    worst = max(float(r["engine_gap"]) for r in rows)
    report("4b second-price identity min{A1-A2, t_m N - C}", len(hits) == len(rows),
           f"{len(hits)} of {len(rows)} runs within one increment, worst gap {worst:.3f} micros")


def test_c05_liquidity_constraint_binds():
    cfg = load_scenario("concave_liquidity")
    agent = cfg.agents[0]
    fam = agent["family"]
    gap = liquidity_gap(fam, cfg.price, cfg.q, cfg.t_m)
    free = best_plan(fam, cfg.price, cfg.q, cfg.t_m, constrained=False)
    bound = best_plan(fam, cfg.price, cfg.q, cfg.t_m)
    r = run(cfg)
    lock = next(e for e in r.book.events if e.kind == "escrow_lock")
    chose = lock.info["S"] == bound.plan.value
    ok = gap is not None and gap > 0 and chose and not r.problems
    report("5 market-size constraint changes the plan", ok,
           f"unconstrained psi {free.surplus / 1e6:.6f} at C={free.plan.cost / 1e6:.3f}, "
           f"constrained psi {bound.surplus / 1e6:.6f} at C={bound.plan.cost / 1e6:.3f}, "
           f"gap {gap / 1e6:.6f}; winning bid claims the constrained plan: {chose}")


def test_c06_destruction_deterred():
    rng = random.Random(f"{SEED}:c6")
    bad, worst = [], None
    for i in range(100):
        raw = verify.destruction_case(rng, SEED + i)
        cfg = load_scenario(raw)
        g = m(raw["agents"][0]["params"]["short_gain"])
        assert cfg.gamma == 0 and g < cfg.price * cfg.q
        d = verify.destruction_run(raw)
        worst = d["payoff"] if worst is None else max(worst, d["payoff"])
        if not d["won"] or d["payoff"] >= 0 or d["compensation"] < d["holder_loss"]:
            bad.append(d)
    report("6 value destruction deterred", not bad,
           f"100 scenarios, {len(bad)} violations, best destroyer payoff {worst / 1e6:.6f}, "
           "compensation >= holder loss in every ledger")


def test_c07_transitional_walkthroughs():
    cases = [("12", "13", 1, m(1500)), ("8", "9", 2, m("3787.5")), ("9", "11", 3, m(3000))]
    got = []
    for price, s, case, want in cases:
        r = run(load_scenario("transitional", overrides={
            "price_process.points": [[0, "10"], [30, price]], "agents.1.bid.S": s}))
        row = next(x for x in r.summary["settlements"] if x["kind"] == "auction_lost")
        got.append((row["case"], row["value_forfeit"], case, want, not r.problems))
    ok = all(c == ec and v == ev and clean for c, v, ec, ev, clean in got)
    report("7 transitional settlements", ok,
           ", ".join(f"case {c}: {v / 1e6:g}" for c, v, *_ in got) + " (expected 1500, 3787.5, 3000)")


def test_c08_flush_concealment_reversal():
    rng = random.Random(f"{SEED}:c8")
    used, drawn, bad, worst = 0, 0, [], None
    while used < 50 and drawn < 500:
        d = verify.flush_pair_run(verify.flush_pair(rng, SEED + drawn))
        drawn += 1
        if d is None or d["clearing_concealer"] <= d["p0"]:
            continue
        used += 1
        worst = d["gap"] if worst is None else min(worst, d["gap"])
        if d["gap"] <= 0:
            bad.append(d)
    report("8 flush sale punishes concealment", used == 50 and not bad,
           f"{used} demand curves clearing above P0 ({drawn} drawn), {len(bad)} where concealing paid, "
           f"smallest honest advantage {worst / 1e6:.6f}")


def test_c09_determinism_conservation_runtime():
    t0 = time.perf_counter()
    results = verify.run_suites(None, OPTS)
    secs = time.perf_counter() - t0
    by = {r.name: r for r in results}
    failed = [f"{c.suite}.{c.name}" for r in results for c in r.failures]
    n = len(bundled_names())
    ok = not failed and by["determinism"].ok and by["conservation"].ok and secs <= 600
    report("9 determinism and conservation", ok,
           f"{n} bundled scenarios byte-identical and replay-consistent every tick, "
           f"{sum(len(r.checks) for r in results)} checks in {len(results)} suites, "
           f"{len(failed)} failed, full verify {secs:.1f}s")


def test_c10_stochastic_reduction():
    rng = random.Random(f"{SEED}:c10")
    mismatches = 0
    for i in range(200):
        p0 = m(rng.randint(1, 50))
        exe = ExecutionModel(p0 + rng.randint(-p0 // 2, m(20)), rng.randint(0, 80),
                             Fraction(rng.randint(0, 4), 4))
        k = rng.randint(1, 300)
        same = np.array_equal(stochastic_path(p0, exe, k, 0.0, i), deterministic_path(p0, exe, k))
        proc = RampProcess(p0, exe, 0.0, k)
        same &= bool((proc.sample(1000, np.random.default_rng(i)) == proc.ramp_terminal()).all())
        mismatches += not same
    mc = verify.two_point_check(SEED, 100_000)
    ok = mismatches == 0 and mc["z"] <= 3
    report("10 stochastic reduction", ok,
           f"sigma=0 identical on 200 paths ({mismatches} mismatches); two-point estimate "
           f"{mc['estimate'] / 1e6:.4f} vs exact {mc['exact'] / 1e6:.4f}, {mc['z']:.2f} SE at "
           f"{mc['samples']} samples")


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-q", "-p", "no:cacheprovider"]))
