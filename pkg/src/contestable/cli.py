"""Command line: ``contestable run | verify | sweep | replay``.

Exit codes: 0 when everything passes, 1 on an invariant violation, 2 on a
configuration error.  ``CONTESTABLE_SEED`` supplies the seed when neither the
command line nor the scenario sets one.
"""
from __future__ import annotations

import argparse
import itertools
import json
import logging
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path
from typing import Optional, Sequence

import yaml

from .ledger import LedgerError, read_jsonl, replay
from .money import fmt
from .scenario import SEED_ENV, ConfigError, bundled_names, load_scenario, resolve_scenario
from .simulate import run
from . import report, verify

EXIT_OK, EXIT_VIOLATION, EXIT_CONFIG = 0, 1, 2


def _env_seed() -> Optional[int]:
    raw = os.environ.get(SEED_ENV)
    if raw is None or raw == "":
        return None
    try:
        return int(raw)
    except ValueError as exc:
        raise ConfigError([f"{SEED_ENV}: not an integer: {raw!r}"]) from exc


def _parse_set(items: Sequence[str]) -> dict:
    out = {}
    for item in items or ():
        key, sep, value = item.partition("=")
        if not sep:
            raise ConfigError([f"--set {item!r}: expected key=value"])
        out[key] = yaml.safe_load(value)
    return out


def cmd_run(args) -> int:
    cfg = load_scenario(args.scenario, seed=args.seed, overrides=_parse_set(args.set))
    result = run(cfg)
    out = Path(args.out or f"out/{cfg.name}")
    report.write_run_report(result, out, figures=not args.no_figures)
    s = result.summary
    print(f"scenario {cfg.name}  seed {cfg.seed}  ticks {s['ticks']}  status {s['status']}")
    for a in s["auctions"]:
        a2 = "-" if a["A2"] is None else fmt(a["A2"])
        print(f"  auction {a['auction']}: winner {a['winner']}  A {fmt(a['A'])}  A1* {fmt(a['A1'])}  A2* {a2}")
    for row in s["settlements"]:
        print(f"  {row['kind']} at tick {row['tick']}: value forfeit {fmt(row['value_forfeit'])}"
              f"  surety forfeit {fmt(row['surety_forfeit'])}")
    print(f"  holder payoff {fmt(s['holder_payoff'])}  forfeits to holders {fmt(s['holder_forfeits'])}")
    print(f"  report written to {out}")
    if result.problems:
        for p in result.problems:
            print(f"  INVARIANT {p}", file=sys.stderr)
        return EXIT_VIOLATION
    return EXIT_OK


def cmd_verify(args) -> int:
    seed = args.seed if args.seed is not None else (_env_seed() or 0)
    mutations = frozenset(args.mutate or ())
    for m in mutations:
        if m not in verify.MUTATIONS:
            raise ConfigError([f"--mutate: unknown mutation {m!r} (known: {', '.join(verify.MUTATIONS)})"])
    names = None
    if args.scenario and not args.all:
        resolve_scenario(args.scenario)
        names = [args.scenario]
    opts = verify.Options(seed=seed, scale=args.scale, mutations=mutations)
    suites = args.suite or list(verify.SUITES)
    results = []
    for name in suites:
        if name in ("conservation", "determinism") and names:
            fn = verify.suite_conservation if name == "conservation" else verify.suite_determinism
            with verify.mutated(opts):
                results.append(fn(opts, names))
        else:
            results += verify.run_suites([name], opts)
    rows = verify.margin_rows(results)
    out = Path(args.out or "out/verify")
    report.write_verify_report(results, out, rows)
    bad = 0
    for r in results:
        print(f"{'PASS' if r.ok else 'FAIL'}  {r.name:<13} {len(r.checks):>3} checks  {r.seconds:6.2f}s")
        for c in r.failures:
            bad += 1
            print(f"      violated: {c.name}  margin={c.margin}")
            if c.witness is not None:
                print("      witness: " + json.dumps(c.witness, default=str, sort_keys=True)[:400])
    print(f"margins written to {out / 'margins.csv'}")
    return EXIT_VIOLATION if bad else EXIT_OK


def _sweep_one(job):
    scenario, overrides, seed = job
    cfg = load_scenario(scenario, seed=seed, overrides=overrides)
    r = run(cfg)
    s = r.summary
    last = s["auctions"][-1] if s["auctions"] else {}
    row = dict(overrides)
    row.update({"winner": last.get("winner"), "A": last.get("A"), "status": s["status"],
                "holder_payoff": s["holder_payoff"], "holder_forfeits": s["holder_forfeits"],
                "replay_ok": s["replay_ok"]})
    return row


def cmd_sweep(args) -> int:
    grid: dict = {}
    scenario = args.scenario
    if args.grid:
        spec = yaml.safe_load(Path(args.grid).read_text()) if Path(args.grid).exists() else None
        if not isinstance(spec, dict) or "grid" not in spec:
            raise ConfigError([f"{args.grid}: expected a mapping with 'scenario' and 'grid'"])
        scenario = scenario or spec.get("scenario")
        grid.update(spec["grid"])
    for item in args.param or ():
        key, sep, values = item.partition("=")
        if not sep:
            raise ConfigError([f"--param {item!r}: expected key=v1,v2,..."])
        grid[key] = [yaml.safe_load(v) for v in values.split(",")]
    if not scenario:
        raise ConfigError(["sweep: no scenario given"])
    if not grid:
        raise ConfigError(["sweep: empty parameter grid"])
    keys = list(grid)
    combos = [dict(zip(keys, vals)) for vals in itertools.product(*(grid[k] for k in keys))]
    seed = args.seed
    # validate every point before spending time on any run
    for c in combos:
        load_scenario(scenario, seed=seed, overrides=c)
    jobs = [(scenario, c, seed) for c in combos]
    if args.jobs > 1:
        with ProcessPoolExecutor(args.jobs) as pool:
            rows = list(pool.map(_sweep_one, jobs))
    else:
        rows = [_sweep_one(j) for j in jobs]
    out = Path(args.out or "out/sweep")
    report.write_sweep_report(rows, keys, out, figures=not args.no_figures)
    for r in rows:
        print("  ".join(f"{k}={r[k]}" for k in keys) + f"  -> winner {r['winner']}  status {r['status']}"
              f"  holder payoff {fmt(r['holder_payoff'])}")
    print(f"sweep written to {out / 'sweep.csv'}")
    return EXIT_OK if all(r["replay_ok"] for r in rows) else EXIT_VIOLATION


def cmd_replay(args) -> int:
    path = Path(args.ledger)
    if not path.exists():
        raise ConfigError([f"{path}: no such ledger"])
    try:
        res = replay(read_jsonl(path), until_tick=args.until_tick)
    except LedgerError as exc:
        raise ConfigError([str(exc)]) from exc
    print(f"{res.events} events over {res.ticks} ticks; status {res.status}")
    if args.balances:
        for (acct, asset), v in res.balances.items():
            shown = fmt(v) if asset == "cash" else str(v)
            print(f"  {acct:<40} {asset:<5} {shown}")
    for p in res.problems:
        print(f"INVARIANT {p}", file=sys.stderr)
    return EXIT_VIOLATION if res.problems else EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="contestable", description=__doc__.split("\n")[0])
    p.add_argument("-v", "--verbose", action="store_true", help="log at INFO level")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="simulate one scenario and write its report")
    r.add_argument("scenario", help="scenario file or bundled name (%s)" % ", ".join(bundled_names()))
    r.add_argument("--seed", type=int)
    r.add_argument("--set", action="append", metavar="KEY=VALUE", help="override a dotted scenario key")
    r.add_argument("--out", help="report directory (default out/<name>)")
    r.add_argument("--no-figures", action="store_true")
    r.set_defaults(func=cmd_run)

    v = sub.add_parser("verify", help="run the invariant suites")
    v.add_argument("scenario", nargs="?", help="restrict scenario-level suites to one scenario")
    v.add_argument("--all", action="store_true", help="use every bundled scenario (the default)")
    v.add_argument("--suite", action="append", choices=list(verify.SUITES))
    v.add_argument("--mutate", action="append", metavar="NAME", help="inject a known defect")
    v.add_argument("--scale", type=float, default=1.0, help="multiply randomized case counts")
    v.add_argument("--seed", type=int)
    v.add_argument("--out", help="report directory (default out/verify)")
    v.set_defaults(func=cmd_verify)

    s = sub.add_parser("sweep", help="run a scenario over a parameter grid")
    s.add_argument("grid", nargs="?", help="YAML file with 'scenario' and 'grid' keys")
    s.add_argument("--scenario")
    s.add_argument("--param", action="append", metavar="KEY=V1,V2", help="add a grid axis")
    s.add_argument("--seed", type=int)
    s.add_argument("--jobs", type=int, default=1)
    s.add_argument("--out", help="report directory (default out/sweep)")
    s.add_argument("--no-figures", action="store_true")
    s.set_defaults(func=cmd_sweep)

    rp = sub.add_parser("replay", help="rebuild state from a ledger and check it")
    rp.add_argument("ledger")
    rp.add_argument("--until-tick", type=int)
    rp.add_argument("--balances", action="store_true", help="print the final balances")
    rp.set_defaults(func=cmd_replay)
    return p


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.ERROR,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        for problem in exc.problems:
            print(f"config error: {problem}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
