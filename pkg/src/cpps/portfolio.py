"""Portfolios on the simplex, lattice candidate sets and realized returns."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

WEIGHT_SUM_TOL = 1e-9


@dataclass(frozen=True)
class Portfolio:
    """Long-only weight vector summing to one.

    Grid-generated weights are stored as ``Fraction`` so ordering and
    dedup are exact; :attr:`array` gives the float view used in arithmetic.
    """

    weights: tuple

    def __post_init__(self):
        w = tuple(self.weights)
        if not w:
            raise ValueError("portfolio needs at least one weight")
        for x in w:
            if not 0 <= x <= 1:
                raise ValueError(f"weight {float(x)} outside [0, 1]")
        total = sum(w)
        if isinstance(total, Fraction):
            if total != 1:
                raise ValueError(f"weights sum to {total}, not 1")
        elif abs(float(total) - 1.0) > WEIGHT_SUM_TOL:
            raise ValueError(f"weights sum to {float(total)!r}, not 1")
        object.__setattr__(self, "weights", w)

    @property
    def K(self) -> int:
        return len(self.weights)

    @property
    def array(self) -> np.ndarray:
        return np.array([float(x) for x in self.weights])

    def _scaled(self) -> tuple[np.ndarray, float]:
        """Integer numerators over a common denominator for rational weights."""
        if all(isinstance(x, Fraction) for x in self.weights):
            denom = math.lcm(*(x.denominator for x in self.weights))
            return np.array([float(x * denom) for x in self.weights]), float(denom)
        return self.array, 1.0

    def label(self) -> str:
        return "(" + ",".join(f"{float(x):.4g}" for x in self.weights) + ")"


@dataclass(frozen=True)
class CandidateSet:
    portfolios: tuple[Portfolio, ...]
    provenance: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        ports = tuple(sorted(self.portfolios, key=lambda p: tuple(p.weights)))
        if not ports:
            raise ValueError("candidate set is empty")
        if len({p.K for p in ports}) != 1:
            raise ValueError("portfolios have differing asset counts")
        keys = [tuple(p.weights) for p in ports]
        if len(set(keys)) != len(keys):
            raise ValueError("candidate set contains duplicate portfolios")
        object.__setattr__(self, "portfolios", ports)

    def __len__(self) -> int:
        return len(self.portfolios)

    def __iter__(self):
        return iter(self.portfolios)

    def __getitem__(self, i: int) -> Portfolio:
        return self.portfolios[i]

    @property
    def K(self) -> int:
        return self.portfolios[0].K

    def matrix(self) -> np.ndarray:
        """|W| x K float weight matrix in candidate order."""
        return np.vstack([p.array for p in self.portfolios])


def _weighted_sum(w: Portfolio, columns: np.ndarray) -> np.ndarray:
    # fixed left-to-right accumulation: scalar and series paths agree bitwise,
    # and equal weights reproduce sum(y) / K exactly
    nums, denom = w._scaled()
    acc = np.zeros(columns.shape[:-1])
    for a in range(w.K):
        acc = acc + nums[a] * columns[..., a]
    return acc / denom


def portfolio_return(w: Portfolio, y: Sequence[float]) -> float:
    y = np.asarray(y, dtype=float)
    if y.shape != (w.K,):
        raise ValueError(f"expected {w.K} asset returns, got shape {y.shape}")
    return float(_weighted_sum(w, y))


def portfolio_return_series(w: Portfolio, returns) -> np.ndarray:
    """Per-period portfolio returns for a ReturnSeries or a T x K array."""
    arr = np.asarray(getattr(returns, "returns", returns), dtype=float)
    if arr.ndim != 2 or arr.shape[1] != w.K:
        raise ValueError(f"expected T x {w.K} returns, got shape {arr.shape}")
    return _weighted_sum(w, arr)


def _compositions(total: int, parts: int):
    if parts == 1:
        yield (total,)
        return
    for first in range(total + 1):
        for rest in _compositions(total - first, parts - 1):
            yield (first,) + rest


def simplex_grid(K: int, G: int) -> CandidateSet:
    """All portfolios with weights in {0, 1/G, ..., 1}; C(G+K-1, K-1) of them."""
    if K < 1 or G < 1:
        raise ValueError("simplex_grid needs K >= 1 and G >= 1")
    ports = [Portfolio(tuple(Fraction(i, G) for i in c)) for c in _compositions(G, K)]
    return CandidateSet(tuple(ports), {"K": K, "G": G})


def export_candidates(candidates: CandidateSet, path: str | Path, asset_ids: Iterable[str] | None = None) -> None:
    names = list(asset_ids) if asset_ids is not None else [f"w{i + 1}" for i in range(candidates.K)]
    if len(names) != candidates.K:
        raise ValueError("asset_ids length does not match candidate dimension")
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(names)
        for p in candidates:
            writer.writerow([repr(float(x)) for x in p.weights])


def import_candidates(path: str | Path) -> tuple[CandidateSet, list[str]]:
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"candidate file not found: {path}")
    ports = []
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = [h.strip() for h in next(reader)]
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            try:
                ports.append(Portfolio(tuple(float(x) for x in row)))
            except ValueError as exc:
                raise ValueError(f"{path}: line {lineno}: {exc}") from None
    return CandidateSet(tuple(ports), {"source": str(path)}), header
