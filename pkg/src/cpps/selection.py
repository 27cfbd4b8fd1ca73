"""Portfolio choice rules over a candidate set."""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Sequence

import numpy as np

from .portfolio import Portfolio


@dataclass(frozen=True)
class IntervalEntry:
    index: int
    portfolio: Portfolio | None
    lower: float
    upper: float
    fallback: bool = False


@dataclass(frozen=True)
class SelectionOutcome:
    chosen_index: int
    chosen: Portfolio | None
    shortlist: tuple[int, ...]
    bounds: dict  # candidate index -> (lower, upper)
    rule_id: str

    def __post_init__(self):
        if self.chosen_index not in self.shortlist:
            raise ValueError("chosen portfolio must belong to the shortlist")


def default_m(n_candidates: int) -> int:
    return max(1, math.ceil(n_candidates / 10))


def _check_table(table: Sequence[IntervalEntry]) -> None:
    if not table:
        raise ValueError("interval table is empty")
    idx = [e.index for e in table]
    if len(set(idx)) != len(idx):
        raise ValueError("interval table has duplicate candidate indices")
    for e in table:
        if not (math.isfinite(e.lower) and math.isfinite(e.upper)):
            raise ValueError(f"candidate {e.index} has non-finite bounds")


def hr_lr_select(table: Sequence[IntervalEntry], m: int, shortlist: str = "highest") -> SelectionOutcome:
    """High-return-from-low-risk choice.

    Keep the ``m`` candidates with the largest lower bounds (ties: larger
    upper, then smaller index), then take the largest upper bound among
    them (ties: larger lower, then smaller index). ``shortlist="lowest"``
    keeps the smallest lower bounds instead.
    """
    _check_table(table)
    if not 1 <= m <= len(table):
        raise ValueError(f"m={m} outside 1..{len(table)}")
    if shortlist == "highest":
        first = sorted(table, key=lambda e: (-e.lower, -e.upper, e.index))
    elif shortlist == "lowest":
        first = sorted(table, key=lambda e: (e.lower, -e.upper, e.index))
    else:
        raise ValueError(f"unknown shortlist rule {shortlist!r}")
    short = first[:m]
    best = min(short, key=lambda e: (-e.upper, -e.lower, e.index))
    return SelectionOutcome(
        chosen_index=best.index,
        chosen=best.portfolio,
        shortlist=tuple(sorted(e.index for e in short)),
        bounds={e.index: (e.lower, e.upper) for e in table},
        rule_id=f"hr-lr[{shortlist},m={m}]",
    )


def point_forecast_select(forecasts: Sequence[float], portfolios: Sequence[Portfolio] | None = None) -> SelectionOutcome:
    """Argmax of per-candidate forecasts; ties go to the first candidate."""
    f = np.asarray(forecasts, dtype=float)
    if f.size == 0:
        raise ValueError("no forecasts")
    if not np.all(np.isfinite(f)):
        bad = int(np.flatnonzero(~np.isfinite(f))[0])
        raise ValueError(f"non-finite forecast for candidate {bad}")
    i = int(np.argmax(f))
    return SelectionOutcome(
        chosen_index=i,
        chosen=portfolios[i] if portfolios is not None else None,
        shortlist=(i,),
        bounds={k: (float(v), float(v)) for k, v in enumerate(f)},
        rule_id="point-forecast-argmax",
    )


def uniform_portfolio(K: int) -> Portfolio:
    if K < 1:
        raise ValueError("K must be at least 1")
    return Portfolio(tuple(Fraction(1, K) for _ in range(K)))
