"""CSV and plain-text outputs. Floats are written with ``repr`` so files are exact and byte-stable."""

from __future__ import annotations

import csv
import math
from pathlib import Path

from .backtest import BacktestResult, CoverageResult


def _num(x: float) -> str:
    return "" if x is None or (isinstance(x, float) and math.isnan(x)) else repr(float(x))


def _writer(fh):
    return csv.writer(fh, lineterminator="\n")


def write_cumulative(result: BacktestResult, path: Path) -> None:
    names = result.strategies
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = _writer(fh)
        w.writerow(["period"] + names)
        labels = [r.label for r in result.records[names[0]]]
        for i, label in enumerate(labels):
            w.writerow([label] + [_num(result.records[n][i].cumulative) for n in names])


def write_selections(result: BacktestResult, path: Path) -> None:
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = _writer(fh)
        w.writerow(
            ["period", "strategy", "rule", "candidate"]
            + [f"w_{a}" for a in result.asset_ids]
            + ["lower", "upper", "fallback", "shortlist", "realized"]
        )
        names = result.strategies
        for i in range(len(result.records[names[0]])):
            for n in names:
                r = result.records[n][i]
                w.writerow(
                    [r.label, n, r.rule_id, r.chosen_index]
                    + [repr(float(x)) for x in r.chosen.weights]
                    + [_num(r.lower), _num(r.upper), int(r.fallback), ";".join(map(str, r.shortlist)), _num(r.realized)]
                )


def write_diagnostics(rows, path: Path) -> None:
    """Rows of (period, strategy, candidate, r, p_value, retained, fallback)."""
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = _writer(fh)
        w.writerow(["period", "strategy", "portfolio_id", "r", "p_value", "retained", "fallback"])
        for period, strategy, cand, r, p, kept, fb in rows:
            w.writerow([period, strategy, cand, repr(r), repr(p), int(kept), int(fb)])


def write_coverage(result: CoverageResult, path: Path) -> None:
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = _writer(fh)
        w.writerow(["trial", "realized", "lower", "upper", "covered", "fallback"])
        for trial, y, lo, hi, covered, fb in result.rows:
            w.writerow([trial, repr(y), repr(lo), repr(hi), int(covered), int(fb)])


def write_run_meta(path: Path, config_text: str, extra: dict | None = None) -> None:
    lines = ["# resolved configuration", config_text.rstrip(), ""]
    for key, value in (extra or {}).items():
        lines.append(f"# {key}: {value}")
    path.write_text("\n".join(lines).rstrip() + "\n", encoding="utf-8")
