"""Seeded synthetic generators: scalar processes, a toy market, price fixtures."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import pandas as pd

from .market_data import ReturnSeries


@dataclass(frozen=True)
class ProcessSpec:
    """Scalar generator for coverage runs: ``ar1`` (iid when coefficient is 0) or ``constant``."""

    kind: str = "ar1"
    coefficient: float = 0.5
    noise_sd: float = 1.0
    constant: float = 0.0
    burn_in: int = 50

    def __post_init__(self):
        if self.kind not in ("ar1", "constant"):
            raise ValueError(f"unknown process kind {self.kind!r}")
        if self.kind == "ar1" and (abs(self.coefficient) >= 1 or self.noise_sd <= 0):
            raise ValueError("ar1 needs |coefficient| < 1 and noise_sd > 0")

    def simulate(self, n: int, rng: np.random.Generator) -> np.ndarray:
        if self.kind == "constant":
            return np.full(n, float(self.constant))
        shocks = rng.normal(0.0, self.noise_sd, size=n + self.burn_in)
        x = np.empty_like(shocks)
        prev = 0.0
        for t, e in enumerate(shocks):
            prev = self.coefficient * prev + e
            x[t] = prev
        return x[self.burn_in:]


def month_labels(start: str, n: int) -> tuple[str, ...]:
    return tuple(str(p) for p in pd.period_range(start, periods=n, freq="M"))


def synthetic_market(
    seed: int,
    n_periods: int = 120,
    coefficient: float = 0.6,
    predictable_sd: float = 0.05,
    noise_sd: float = 0.05,
    drift: float = 0.005,
    n_noise_assets: int = 2,
    start: str = "2009-01",
) -> ReturnSeries:
    """Asset A1 follows an AR(1) around ``drift``; the others are iid Gaussian noise."""
    rng = np.random.default_rng(seed)
    burn = 50
    shocks = rng.normal(0.0, predictable_sd, size=n_periods + burn)
    ar = np.empty_like(shocks)
    prev = 0.0
    for t, e in enumerate(shocks):
        prev = coefficient * prev + e
        ar[t] = prev
    cols = [drift + ar[burn:]]
    for _ in range(n_noise_assets):
        cols.append(drift + rng.normal(0.0, noise_sd, size=n_periods))
    returns = np.clip(np.column_stack(cols), -0.95, None)
    ids = tuple(f"A{i + 1}" for i in range(returns.shape[1]))
    return ReturnSeries(returns, ids, month_labels(start, n_periods))


def write_price_csv(path: str | Path, returns: ReturnSeries, first_month: str, start_price: float = 100.0) -> None:
    """Long-format month-end prices whose monthly returns reproduce ``returns``."""
    months = pd.period_range(first_month, periods=returns.T + 1, freq="M")
    levels = start_price * np.vstack([np.ones(returns.K), np.cumprod(1.0 + returns.returns, axis=0)])
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["date", "asset", "price"])
        for j, asset in enumerate(returns.asset_ids):
            for i, month in enumerate(months):
                writer.writerow([month.to_timestamp(how="end").date().isoformat(), asset, f"{levels[i, j]:.6f}"])
