"""Price ingestion, month-end simple returns and lag-feature matrices."""

from __future__ import annotations

import csv
import datetime as dt
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
import pandas as pd


class DataError(ValueError):
    """Raised when input data violates an ingestion invariant."""


@dataclass(frozen=True)
class ColumnMap:
    date: str = "date"
    asset: str = "asset"
    price: str = "price"
    layout: str = "long"  # "long" (date,asset,price) or "wide" (date,A,B,...)


@dataclass(frozen=True)
class PriceTable:
    """Validated long-format prices sorted by (asset, date)."""

    frame: pd.DataFrame = field(repr=False)

    @property
    def assets(self) -> tuple[str, ...]:
        return tuple(self.frame["asset"].unique())

    def __len__(self) -> int:
        return len(self.frame)


@dataclass(frozen=True)
class ReturnSeries:
    """T x K matrix of simple returns; row i is period i + 1."""

    returns: np.ndarray
    asset_ids: tuple[str, ...]
    labels: tuple[str, ...] = ()

    def __post_init__(self):
        arr = np.array(self.returns, dtype=float)
        if arr.ndim != 2:
            raise DataError("returns must be a T x K matrix")
        if arr.shape[1] != len(self.asset_ids):
            raise DataError("asset_ids length does not match return columns")
        if not np.all(np.isfinite(arr)):
            raise DataError("returns contain missing or non-finite entries")
        if np.any(arr <= -1.0):
            raise DataError("every return must exceed -1")
        labels = tuple(self.labels) or tuple(str(i + 1) for i in range(arr.shape[0]))
        if len(labels) != arr.shape[0]:
            raise DataError("labels length does not match number of periods")
        arr.setflags(write=False)
        object.__setattr__(self, "returns", arr)
        object.__setattr__(self, "labels", labels)

    @property
    def T(self) -> int:
        return self.returns.shape[0]

    @property
    def K(self) -> int:
        return self.returns.shape[1]

    def period_of(self, key: str | int) -> int:
        """Resolve a label ("2012-01") or 1-based integer to a 1-based period index."""
        if isinstance(key, (int, np.integer)):
            idx = int(key)
        else:
            key = str(key)
            if key in self.labels:
                idx = self.labels.index(key) + 1
            elif key.isdigit():
                idx = int(key)
            else:
                raise DataError(f"unknown period {key!r}")
        if not 1 <= idx <= self.T:
            raise DataError(f"period {key!r} outside 1..{self.T}")
        return idx

    def head(self, n: int) -> "ReturnSeries":
        return ReturnSeries(self.returns[:n], self.asset_ids, self.labels[:n])


@dataclass(frozen=True)
class LagFeatureMatrix:
    lags: tuple[int, ...]
    periods: np.ndarray  # 1-based periods t with max(lags) < t <= T
    rows: np.ndarray

    def row(self, t: int) -> np.ndarray:
        i = t - max(self.lags) - 1
        if i < 0 or i >= len(self.periods):
            raise IndexError(f"no feature row for period {t}")
        return self.rows[i]


def _parse_date(text: str, lineno: int) -> dt.date:
    try:
        return dt.date.fromisoformat(text.strip()[:10])
    except ValueError:
        raise DataError(f"unparseable date {text!r} at line {lineno}") from None


def _parse_price(text: str, lineno: int) -> float:
    try:
        value = float(text)
    except ValueError:
        raise DataError(f"unparseable price {text!r} at line {lineno}") from None
    if not math.isfinite(value):
        raise DataError(f"non-finite price at line {lineno}")
    if value <= 0:
        raise DataError(f"non-positive price at line {lineno}")
    return value


def load_prices(path: str | Path, columns: ColumnMap | None = None) -> PriceTable:
    """Read a price CSV in long or wide layout.

    Line numbers in error messages count the header as line 1.
    """
    columns = columns or ColumnMap()
    path = Path(path)
    if not path.is_file():
        raise DataError(f"price file not found: {path}")

    records: list[tuple[dt.date, str, float]] = []
    seen: dict[tuple[dt.date, str], int] = {}
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise DataError(f"empty price file: {path}") from None
        if columns.date not in header:
            raise DataError(f"missing column {columns.date!r}")
        di = header.index(columns.date)
        if columns.layout == "long":
            for name in (columns.asset, columns.price):
                if name not in header:
                    raise DataError(f"missing column {name!r}")
            ai, pi = header.index(columns.asset), header.index(columns.price)
            value_cols = None
        elif columns.layout == "wide":
            value_cols = [(i, h) for i, h in enumerate(header) if i != di]
            if not value_cols:
                raise DataError("wide layout needs at least one asset column")
        else:
            raise DataError(f"unknown layout {columns.layout!r}")

        for lineno, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != len(header):
                raise DataError(f"expected {len(header)} fields at line {lineno}, got {len(row)}")
            date = _parse_date(row[di], lineno)
            if value_cols is None:
                cells = [(row[ai].strip(), row[pi])]
            else:
                cells = [(name, row[i]) for i, name in value_cols if row[i].strip()]
            for asset, raw in cells:
                price = _parse_price(raw, lineno)
                key = (date, asset)
                if key in seen:
                    raise DataError(
                        f"duplicate (date, asset) ({date}, {asset}) at line {lineno}; "
                        f"first seen at line {seen[key]}"
                    )
                seen[key] = lineno
                records.append((date, asset, price))

    frame = pd.DataFrame(records, columns=["date", "asset", "price"])
    frame["date"] = pd.to_datetime(frame["date"])
    frame = frame.sort_values(["asset", "date"], kind="mergesort").reset_index(drop=True)
    return PriceTable(frame)


def to_monthly_returns(prices: PriceTable) -> ReturnSeries:
    """Month-end simple returns; the first month of the span is consumed."""
    frame = prices.frame
    if frame.empty:
        raise DataError("no prices")
    month = frame["date"].dt.to_period("M")
    month_end = frame.assign(month=month).groupby(["asset", "month"], sort=True)["price"].last()
    wide = month_end.unstack("asset")
    span = pd.period_range(wide.index.min(), wide.index.max(), freq="M")
    wide = wide.reindex(span)
    assets = list(prices.assets)
    wide = wide[assets]
    for asset in assets:
        missing = wide.index[wide[asset].isna()]
        if len(missing):
            raise DataError(f"asset {asset} has no price in month {missing[0]}")
    if len(wide) < 2:
        raise DataError("need at least two months of prices")
    values = wide.to_numpy(dtype=float)
    rets = values[1:] / values[:-1] - 1.0
    labels = tuple(str(p) for p in wide.index[1:])
    return ReturnSeries(rets, tuple(str(a) for a in assets), labels)


def build_lag_features(series: Sequence[float], lags: Sequence[int]) -> LagFeatureMatrix:
    y = np.asarray(series, dtype=float)
    lags = tuple(int(l) for l in lags)
    if not lags or min(lags) < 1:
        raise ValueError("lags must be positive integers")
    L = max(lags)
    T = len(y)
    if T <= L:
        raise DataError(f"insufficient history: series length {T} <= max lag {L}")
    periods = np.arange(L + 1, T + 1)
    # period t (1-based) is y[t-1]; lag l reads y[t-1-l]
    rows = np.column_stack([y[periods - 1 - l] for l in lags])
    return LagFeatureMatrix(lags, periods, rows)
