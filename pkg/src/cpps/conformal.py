"""Full conformal prediction intervals for a dependent univariate series.

The augmented sample holds the ``n`` observed (target, lag-feature) pairs
followed by the hypothesis pair ``(r, X_{T+1})``. Cyclic blocking
permutations act on all ``N = n + 1`` positions; for each permutation the
model is trained on the first ``N - 1`` entries of the permuted order and
the score is the mean squared error over all ``N`` entries. The identity
permutation therefore holds the hypothesis out, while every other
permutation holds out exactly one observed pair. Features travel with
their targets; the hypothesis never enters a feature row.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .market_data import DataError
from .models import TrainedModel, Trainer, centered_svd

# ties in score comparisons: |a - b| within this band counts as equal
TIE_RTOL = 1e-9
TIE_ATOL = 1e-15
# leverage above this makes the closed-form refit unreliable; use explicit refits
LEVERAGE_LIMIT = 1.0 - 1e-8


class ConformalError(RuntimeError):
    pass


def blocking_permutation(j: int, T: int) -> tuple[int, ...]:
    """1-based cyclic shift t -> t + (j - 1), wrapping past T."""
    if not 1 <= j <= T:
        raise ValueError(f"permutation index {j} outside 1..{T}")
    shift = j - 1
    return tuple(t + shift if t <= T - shift else t + shift - T for t in range(1, T + 1))


def blocking_permutations(T: int) -> list[tuple[int, ...]]:
    return [blocking_permutation(j, T) for j in range(1, T + 1)]


@dataclass(frozen=True)
class HypothesisGrid:
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float).ravel()
        if v.size < 2:
            raise ValueError("hypothesis grid needs at least two values")
        if not np.all(np.isfinite(v)) or np.any(np.diff(v) <= 0):
            raise ValueError("hypothesis grid must be finite and strictly increasing")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @classmethod
    def evenly_spaced(cls, lower: float, upper: float, step: float) -> "HypothesisGrid":
        if step <= 0 or upper <= lower:
            raise ValueError("grid needs lower < upper and step > 0")
        count = int(round((upper - lower) / step)) + 1
        return cls(np.round(lower + step * np.arange(count), 12))

    def __len__(self) -> int:
        return self.values.size


DEFAULT_GRID = HypothesisGrid.evenly_spaced(-0.3, 0.3, 0.01)


@dataclass(frozen=True)
class AugmentedDataset:
    """Targets ``R_1..R_T, r`` and per-period features; rows before ``first_usable`` lack history."""

    targets: np.ndarray
    features: np.ndarray
    first_usable: int = 0

    @property
    def T(self) -> int:
        return self.targets.size - 1

    @property
    def hypothesis(self) -> float:
        return float(self.targets[-1])

    def pairs(self) -> tuple[np.ndarray, np.ndarray]:
        """Usable (X, y); the last row is the hypothesis pair."""
        return self.features[self.first_usable:], self.targets[self.first_usable:]


def lag_design(series: np.ndarray, lags: Sequence[int]) -> tuple[np.ndarray, int]:
    """Feature rows for periods 1..T+1 built from ``series`` only, plus first usable row."""
    T = series.size
    L = max(lags)
    X = np.full((T + 1, len(lags)), np.nan)
    for i, lag in enumerate(lags):
        X[lag:, i] = series[: T + 1 - lag]
    return X, L


def augment(series, r: float, lags: Sequence[int] | None = None, features=None) -> AugmentedDataset:
    """Append hypothesis ``r`` as the target of period T+1.

    Either ``lags`` (features built from the series) or explicit
    ``features`` with T+1 rows must be given.
    """
    y = np.asarray(series, dtype=float).ravel()
    if features is not None:
        X = np.asarray(features, dtype=float)
        if X.ndim == 1:
            X = X.reshape(-1, 1)
        if X.shape[0] != y.size + 1:
            raise DataError(f"need {y.size + 1} feature rows (including X_T+1), got {X.shape[0]}")
        first = 0
    else:
        if not lags:
            raise ValueError("augment needs lags or explicit features")
        if y.size <= max(lags):
            raise DataError(f"insufficient history: {y.size} observations for lags {tuple(lags)}")
        X, first = lag_design(y, lags)
    targets = np.append(y, float(r))
    return AugmentedDataset(targets, X, first)


@dataclass(frozen=True)
class PredictionInterval:
    grid: np.ndarray = field(repr=False)
    pvalues: np.ndarray = field(repr=False)
    alpha: float
    lower: float
    upper: float
    fallback: bool
    n_permutations: int
    refit: bool

    @property
    def retained_mask(self) -> np.ndarray:
        if self.fallback:
            mask = np.zeros(self.grid.size, dtype=bool)
            mask[int(np.argmax(self.pvalues))] = True
            return mask
        return self.pvalues > self.alpha

    @property
    def retained(self) -> np.ndarray:
        return self.grid[self.retained_mask]

    @property
    def p_values(self) -> dict[float, float]:
        return {float(r): float(p) for r, p in zip(self.grid, self.pvalues)}

    def contains(self, value: float) -> bool:
        return self.lower <= value <= self.upper


def _at_least(scores: np.ndarray, reference) -> np.ndarray:
    reference = np.asarray(reference)
    return scores >= reference - (TIE_RTOL * np.abs(reference) + TIE_ATOL)


def nonconformity_score(model: TrainedModel, data: AugmentedDataset, ordering: Sequence[int] | None = None) -> float:
    """Mean squared error of ``model`` over every usable pair of ``data``.

    ``ordering`` (1-based, over usable pairs) only fixes which entries
    were used for training; the mean itself does not depend on it.
    """
    X, y = data.pairs()
    if ordering is not None:
        idx = np.asarray(ordering, dtype=int) - 1
        if sorted(idx.tolist()) != list(range(y.size)):
            raise ValueError("ordering must be a permutation of the usable pairs")
        X, y = X[idx], y[idx]
    resid = y - model.predict(X)
    return float(resid @ resid) / y.size


def heldout_score(model: TrainedModel, data: AugmentedDataset, ordering: Sequence[int]) -> float:
    """Squared error of the entry placed last (held out) by ``ordering``."""
    X, y = data.pairs()
    k = int(ordering[-1]) - 1
    return float((y[k] - model.predict(X[k])) ** 2)


def permutation_scores(data: AugmentedDataset, trainer: Trainer, refit: bool) -> np.ndarray:
    """Score of each blocking permutation, identity first.

    With ``refit`` the model is retrained per permutation. Without it a
    single model trained on the observed pairs is reused; a frozen model
    gives every permutation the same full-sample MSE, so each permutation
    is scored by the squared error of the entry it holds out instead.
    """
    X, y = data.pairs()
    N = y.size
    perms = np.array(blocking_permutations(N)) - 1
    scores = np.empty(N)
    if refit:
        for j, order in enumerate(perms):
            train = order[:-1]
            try:
                model = trainer(X[train], y[train])
            except Exception as exc:
                raise ConformalError(f"trainer failed on blocking permutation {j + 1}: {exc}") from exc
            resid = y - model.predict(X)
            scores[j] = float(resid @ resid) / N
    else:
        try:
            model = trainer(X[:-1], y[:-1])
        except Exception as exc:
            raise ConformalError(f"trainer failed on blocking permutation 1: {exc}") from exc
        resid2 = (y - model.predict(X)) ** 2
        scores[:] = resid2[perms[:, -1]]
    return scores


def _resolve(trainer, lags, refit):
    if lags is None:
        spec = getattr(trainer, "spec", None)
        lags = spec.lags if spec is not None else None
    if refit is None:
        refit = bool(getattr(trainer, "linear", False))
    return lags, refit


def conformal_pvalue(series, r: float, trainer: Trainer, *, lags=None, features=None, refit: bool | None = None) -> float:
    """p-value of hypothesis ``r``: share of permutations scoring at least the identity."""
    lags, refit = _resolve(trainer, lags, refit)
    data = augment(series, r, lags=None if features is not None else lags, features=features)
    scores = permutation_scores(data, trainer, refit)
    return int(np.count_nonzero(_at_least(scores, scores[0]))) / scores.size


def _linear_refit_pvalues(X: np.ndarray, y_obs: np.ndarray, grid: np.ndarray) -> np.ndarray | None:
    """Exact leave-one-out refit scores for least squares, for every grid value at once.

    For a least-squares fit the full-sample SSE of the fit that drops
    entry k is ``SSE + e_k**2 * h_k / (1 - h_k)**2`` (e: full-fit residual,
    h: leverage), and residuals are affine in the hypothesis, so no
    per-permutation refit is needed. Returns None when a leverage is ~1.
    """
    N = y_obs.size + 1
    U, _, _ = centered_svd(X)
    H = np.full((N, N), 1.0 / N) + U @ U.T
    h = np.diag(H).copy()
    if h.max() > LEVERAGE_LIMIT:
        return None
    M = np.eye(N) - H
    e0 = M[:, :-1] @ y_obs
    E = e0[None, :] + grid[:, None] * M[None, :, -1]
    sse = np.einsum("ij,ij->i", E, E)
    w = h / (1.0 - h) ** 2
    S = (sse[:, None] + w[None, :] * E * E) / N
    hits = _at_least(S, S[:, -1:])
    return hits.sum(axis=1) / N


def grid_pvalues(series, grid, trainer: Trainer, *, lags=None, features=None, refit: bool | None = None) -> np.ndarray:
    lags, refit = _resolve(trainer, lags, refit)
    values = grid.values if isinstance(grid, HypothesisGrid) else np.asarray(grid, dtype=float)
    data = augment(series, 0.0, lags=None if features is not None else lags, features=features)
    X, y = data.pairs()
    N = y.size
    if N < 3:
        raise DataError(f"only {N - 1} usable observations; need at least 2")

    if refit and getattr(trainer, "linear", False):
        fast = _linear_refit_pvalues(X, y[:-1], values)
        if fast is not None:
            return fast
    if refit:
        out = np.empty(values.size)
        for i, r in enumerate(values):
            y[-1] = r
            scores = permutation_scores(AugmentedDataset(y.copy(), X, 0), trainer, True)
            out[i] = np.count_nonzero(_at_least(scores, scores[0])) / N
        return out

    try:
        model = trainer(X[:-1], y[:-1])
    except Exception as exc:
        raise ConformalError(f"trainer failed on blocking permutation 1: {exc}") from exc
    fitted = model.predict(X)
    obs2 = (y[:-1] - fitted[:-1]) ** 2
    hyp2 = (values - fitted[-1]) ** 2
    # identity holds out the hypothesis (always counted); the others hold out one observed pair each
    hits = _at_least(obs2[None, :], hyp2[:, None]).sum(axis=1)
    return (1 + hits) / N


def prediction_interval(
    series,
    grid: HypothesisGrid | Sequence[float] = DEFAULT_GRID,
    alpha: float = 0.2,
    trainer: Trainer | None = None,
    *,
    lags=None,
    features=None,
    refit: bool | None = None,
) -> PredictionInterval:
    """Retain grid values with p-value above ``alpha``.

    When nothing survives, the single grid value with the largest p-value
    is kept and ``fallback`` is set.
    """
    if not 0 < alpha < 1:
        raise ValueError(f"alpha must lie in (0, 1), got {alpha}")
    if trainer is None:
        raise ValueError("prediction_interval needs a trainer")
    if not isinstance(grid, HypothesisGrid):
        grid = HypothesisGrid(grid)
    lags, refit = _resolve(trainer, lags, refit)
    p = grid_pvalues(series, grid, trainer, lags=lags, features=features, refit=refit)
    n_perm = int(np.asarray(series).size + 1 - (0 if features is not None else max(lags)))
    keep = p > alpha
    fallback = not keep.any()
    if fallback:
        keep = np.zeros_like(keep)
        keep[int(np.argmax(p))] = True
    kept = grid.values[keep]
    return PredictionInterval(
        grid=grid.values,
        pvalues=p,
        alpha=float(alpha),
        lower=float(kept.min()),
        upper=float(kept.max()),
        fallback=bool(fallback),
        n_permutations=n_perm,
        refit=bool(refit),
    )
