"""Report files for runs, verification and sweeps: CSV, JSON Lines and PNG figures."""
from __future__ import annotations

import csv
import json
from pathlib import Path
from typing import Mapping, Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

from .ledger import CASH, _plain  # noqa: E402
from .money import SCALE  # noqa: E402


def write_csv(path: Path, rows: Sequence[Mapping], fields: Sequence[str] | None = None) -> Path:
    fields = list(fields or (rows[0].keys() if rows else []))
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=fields, extrasaction="ignore")
        w.writeheader()
        for row in rows:
            w.writerow({k: _cell(row.get(k)) for k in fields})
    return path


def _cell(v):
    if isinstance(v, (dict, list)):
        return json.dumps(_plain(v), sort_keys=True)
    return "" if v is None else v


def escrow_series(events, ticks: int) -> list[int]:
    """Cash held in escrow at the end of each tick."""
    level = 0
    out = [0] * ticks
    by_tick: dict[int, int] = {}
    for ev in events:
        for m in ev.moves:
            if m.asset != CASH:
                continue
            d = (m.dst.startswith("escrow/")) - (m.src.startswith("escrow/"))
            by_tick[ev.tick] = by_tick.get(ev.tick, 0) + d * m.amount
    for t in range(ticks):
        level += by_tick.get(t, 0)
        out[t] = level
    return out


def write_run_report(result, out: Path, figures: bool = True) -> list[Path]:
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    files = [result.book.write(out / "ledger.jsonl")]
    (out / "summary.json").write_text(json.dumps(_plain(result.summary), indent=2, sort_keys=True) + "\n")
    files.append(out / "summary.json")
    files.append(write_csv(out / "payoffs.csv", result.payoffs))
    rows = [{"tick": t, "price": p} for t, p in enumerate(result.prices)]
    files.append(write_csv(out / "prices.csv", rows, ["tick", "price"]))
    sett = result.summary["settlements"]
    fields = ["tick", "kind", "controller", "case", "X", "S_w", "P0_w", "P_ref", "value_forfeit",
              "value_refund", "surety_forfeit", "surety_refund", "payouts"]
    files.append(write_csv(out / "settlements.csv", sett, fields))
    if figures:
        files += plot_run(result, out)
    return files


def plot_run(result, out: Path) -> list[Path]:
    name = result.cfg.name
    ticks = range(len(result.prices))
    paths = []

    fig, ax = plt.subplots(figsize=(7, 3.5))
    ax.plot(list(ticks), [p / SCALE for p in result.prices], lw=1.2)
    for e in result.book.events:
        if e.kind == "auction_clear":
            ax.axvline(e.tick, color="tab:orange", ls="--", lw=0.8)
        elif e.kind in ("success_refund", "value_forfeit"):
            ax.axvline(e.tick, color="tab:red", ls=":", lw=0.8)
    ax.set_xlabel("tick")
    ax.set_ylabel("token price")
    ax.set_title(f"{name}: price path")
    fig.tight_layout()
    paths.append(out / "price_path.png")
    fig.savefig(paths[-1], dpi=110)
    plt.close(fig)

    fig, ax = plt.subplots(figsize=(7, 3.5))
    ax.step(list(ticks), [v / SCALE for v in escrow_series(result.book.events, len(result.prices))],
            where="post")
    ax.set_xlabel("tick")
    ax.set_ylabel("cash in escrow")
    ax.set_title(f"{name}: escrowed deposits")
    fig.tight_layout()
    paths.append(out / "escrow.png")
    fig.savefig(paths[-1], dpi=110)
    plt.close(fig)

    rows = result.payoffs
    fig, ax = plt.subplots(figsize=(7, 0.6 + 0.25 * len(rows)))
    vals = [r["payoff"] / SCALE for r in rows]
    ax.barh([r["party"] for r in rows], vals,
            color=["tab:green" if v >= 0 else "tab:red" for v in vals])
    ax.axvline(0, color="black", lw=0.6)
    ax.set_xlabel("payoff")
    ax.set_title(f"{name}: payoffs at the final price")
    fig.tight_layout()
    paths.append(out / "payoffs.png")
    fig.savefig(paths[-1], dpi=110)
    plt.close(fig)
    return paths


def write_verify_report(results, out: Path, rows: Sequence[Mapping]) -> list[Path]:
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    files = [write_csv(out / "margins.csv", rows, ["suite", "check", "ok", "margin"])]
    wdir = out / "witnesses"
    for r in results:
        for c in r.failures:
            if c.witness is None:
                continue
            wdir.mkdir(exist_ok=True)
            path = wdir / f"{c.suite}__{c.name.replace(':', '_')}.json"
            path.write_text(json.dumps(_plain(c.witness), indent=2, sort_keys=True, default=str) + "\n")
            files.append(path)
    return files


def write_sweep_report(rows: Sequence[Mapping], params: Sequence[str], out: Path,
                       figures: bool = True) -> list[Path]:
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    fields = list(params) + ["winner", "A", "status", "holder_payoff", "holder_forfeits", "replay_ok"]
    files = [write_csv(out / "sweep.csv", rows, fields)]
    if figures and rows:
        fig, ax = plt.subplots(figsize=(7, 3.5))
        labels = [", ".join(str(r[p]) for p in params) for r in rows]
        ax.plot(range(len(rows)), [(r["holder_payoff"] or 0) / SCALE for r in rows], marker="o")
        ax.set_xticks(range(len(rows)))
        ax.set_xticklabels(labels, rotation=45, ha="right", fontsize=7)
        ax.set_ylabel("holder payoff")
        ax.set_title("sweep: " + ", ".join(params))
        fig.tight_layout()
        files.append(out / "sweep.png")
        fig.savefig(files[-1], dpi=110)
        plt.close(fig)
    return files

