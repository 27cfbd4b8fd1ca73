"""Rolling backtest of CPPS and point-forecast baselines, plus coverage runs.

Each test period ``t`` sees only returns strictly before ``t``: strategies
receive a copied history slice, never the full matrix.
"""

from __future__ import annotations

import logging
import math
import re
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from .conformal import DEFAULT_GRID, HypothesisGrid, PredictionInterval, prediction_interval
from .market_data import DataError, ReturnSeries
from .models import ModelSpec, fit_ar, make_trainer
from .portfolio import CandidateSet, Portfolio, portfolio_return, portfolio_return_series, simplex_grid
from .selection import IntervalEntry, default_m, hr_lr_select, point_forecast_select, uniform_portfolio
from .synthetic import ProcessSpec

log = logging.getLogger(__name__)

DEFAULT_STRATEGIES = ("CPPS-AR", "CPPS-NN", "Mean[1]", "Mean[3]", "AR(1)", "AR(2)", "AR(3)", "Uniform")


class BacktestError(RuntimeError):
    pass


@dataclass(frozen=True)
class StrategySpec:
    name: str
    kind: str  # "cpps" | "mean" | "ar" | "uniform"
    model: ModelSpec | None = None
    years: int = 0
    order: int = 0
    refit: bool | None = None

    @property
    def min_history(self) -> int:
        if self.kind == "mean":
            return 12 * self.years
        if self.kind == "ar":
            return 36
        if self.kind == "cpps":
            # usable pairs must leave at least lags + 2 rows for each refit
            return max(self.model.lags) + len(self.model.lags) + 2
        return 0


def parse_strategy(
    name: str,
    ar_spec: ModelSpec | None = None,
    nn_spec: ModelSpec | None = None,
    refit_ar: bool = True,
    refit_nn: bool = False,
) -> StrategySpec:
    if name == "CPPS-AR":
        return StrategySpec(name, "cpps", ar_spec or ModelSpec.ar(3), refit=refit_ar)
    if name == "CPPS-NN":
        return StrategySpec(name, "cpps", nn_spec or ModelSpec.nn(), refit=refit_nn)
    if name == "Uniform":
        return StrategySpec(name, "uniform")
    m = re.fullmatch(r"Mean\[(\d+)\]", name)
    if m:
        return StrategySpec(name, "mean", years=int(m.group(1)))
    m = re.fullmatch(r"AR\((\d+)\)", name)
    if m:
        return StrategySpec(name, "ar", order=int(m.group(1)))
    raise ValueError(f"unknown strategy {name!r}")


@dataclass(frozen=True)
class BacktestConfig:
    train_start: str | int
    test_start: str | int
    test_end: str | int
    strategies: tuple[StrategySpec, ...] = field(default_factory=lambda: tuple(parse_strategy(s) for s in DEFAULT_STRATEGIES))
    alpha: float = 0.2
    m: int | None = None
    grid: HypothesisGrid = DEFAULT_GRID
    candidates: CandidateSet | None = None
    resolution: int = 10
    window: str = "expanding"  # CPPS window: "expanding" from train_start or "rolling"
    rolling_months: int = 36
    shortlist: str = "highest"
    cumulative: str = "compound"
    seed: int = 0
    workers: int = 1
    diagnostics: bool = False

    def __post_init__(self):
        if not 0 < self.alpha < 1:
            raise ValueError("alpha must lie in (0, 1)")
        if self.window not in ("expanding", "rolling"):
            raise ValueError(f"unknown window {self.window!r}")
        if self.cumulative not in ("compound", "additive"):
            raise ValueError(f"unknown cumulative mode {self.cumulative!r}")
        if self.workers < 1:
            raise ValueError("workers must be >= 1")
        if not self.strategies:
            raise ValueError("no strategies configured")
        names = [s.name for s in self.strategies]
        if len(set(names)) != len(names):
            raise ValueError("duplicate strategy names")


@dataclass(frozen=True)
class PeriodRecord:
    period: int
    label: str
    chosen_index: int
    chosen: Portfolio
    realized: float
    cumulative: float
    lower: float = math.nan
    upper: float = math.nan
    fallback: bool = False
    shortlist: tuple[int, ...] = ()
    rule_id: str = ""


@dataclass
class BacktestResult:
    records: dict[str, list[PeriodRecord]]
    asset_ids: tuple[str, ...]
    metadata: dict = field(default_factory=dict)
    diagnostics: list[tuple] = field(default_factory=list)

    @property
    def strategies(self) -> list[str]:
        return list(self.records)

    def realized(self, name: str) -> np.ndarray:
        return np.array([r.realized for r in self.records[name]])

    def cumulative(self, name: str) -> np.ndarray:
        return np.array([r.cumulative for r in self.records[name]])

    def terminal(self, name: str) -> float:
        return self.records[name][-1].cumulative


def cumulative_returns(realized: Sequence[float], mode: str = "compound") -> np.ndarray:
    r = np.asarray(realized, dtype=float)
    if mode == "additive":
        return np.cumsum(r)
    if np.any(r <= -1):
        raise ValueError("compounding needs every return > -1")
    return np.cumprod(1.0 + r) - 1.0


def baseline_forecast(strategy: str | StrategySpec, window: Sequence[float]) -> float:
    """Mean[n]: mean of the last 12n returns. AR(p): one-step forecast from the last 36."""
    spec = parse_strategy(strategy) if isinstance(strategy, str) else strategy
    y = np.asarray(window, dtype=float)
    need = spec.min_history
    if spec.kind not in ("mean", "ar"):
        raise ValueError(f"{spec.name} is not a point-forecast baseline")
    if y.size < need:
        raise DataError(f"{spec.name} needs {need} returns, got {y.size}")
    recent = y[-need:]
    if spec.kind == "mean":
        return float(recent.mean())
    model = fit_ar(recent, spec.order)
    return float(model.predict(recent[::-1][: spec.order]))


def _nn_seed(seed: int, strategy_idx: int, period: int, candidate: int) -> int:
    ss = np.random.SeedSequence(seed, spawn_key=(strategy_idx, period, candidate))
    return int(ss.generate_state(1)[0])


def _interval_task(args) -> PredictionInterval:
    series, grid, alpha, spec, refit = args
    return prediction_interval(series, grid, alpha, make_trainer(spec), refit=refit)


def _resolve_period(data: ReturnSeries, key) -> int:
    try:
        return data.period_of(key)
    except DataError as exc:
        raise BacktestError(str(exc)) from None


def run_backtest(config: BacktestConfig, data: ReturnSeries) -> BacktestResult:
    started = time.perf_counter()
    train = _resolve_period(data, config.train_start)
    first = _resolve_period(data, config.test_start)
    last = _resolve_period(data, config.test_end)
    if not train < first <= last:
        raise BacktestError("need train_start < test_start <= test_end")

    candidates = config.candidates or simplex_grid(data.K, config.resolution)
    if candidates.K != data.K:
        raise BacktestError(f"candidate set has {candidates.K} assets, data has {data.K}")
    m = config.m if config.m else default_m(len(candidates))
    if not 1 <= m <= len(candidates):
        raise BacktestError(f"m={m} outside 1..{len(candidates)}")

    available = first - train
    for s in config.strategies:
        window = min(available, config.rolling_months) if s.kind == "cpps" and config.window == "rolling" else available
        if window < s.min_history:
            raise BacktestError(f"insufficient history for {s.name}: {window} periods before test start, needs {s.min_history}")

    records: dict[str, list[PeriodRecord]] = {s.name: [] for s in config.strategies}
    diagnostics: list[tuple] = []
    fallbacks = {s.name: 0 for s in config.strategies}
    pool = ProcessPoolExecutor(max_workers=config.workers) if config.workers > 1 else None
    try:
        for t in range(first, last + 1):
            # rows train-1 .. t-2 hold periods train .. t-1
            history = np.array(data.returns[train - 1 : t - 1])
            history.setflags(write=False)
            y_t = data.returns[t - 1]
            label = data.labels[t - 1]
            for s_idx, spec in enumerate(config.strategies):
                try:
                    rec, diag = _select(spec, s_idx, t, history, candidates, m, config, pool)
                except Exception as exc:
                    raise BacktestError(f"strategy {spec.name} failed at period {label}: {exc}") from exc
                realized = portfolio_return(rec["chosen"], y_t)
                fallbacks[spec.name] += int(rec.get("fallback", False))
                records[spec.name].append(
                    PeriodRecord(period=t, label=label, realized=realized, cumulative=math.nan, **rec)
                )
                diagnostics.extend((label, spec.name) + row for row in diag)
    finally:
        if pool is not None:
            pool.shutdown()

    for name, recs in records.items():
        path = cumulative_returns([r.realized for r in recs], config.cumulative)
        records[name] = [replace(r, cumulative=float(c)) for r, c in zip(recs, path)]

    runtime = time.perf_counter() - started
    meta = {
        "n_candidates": len(candidates),
        "m": m,
        "fallback_counts": fallbacks,
        "refit": {s.name: s.refit for s in config.strategies if s.kind == "cpps"},
        "runtime_seconds": runtime,
    }
    for s in config.strategies:
        if s.kind == "cpps" and not s.refit:
            log.info("%s scores permutations with a single model (no per-permutation refit)", s.name)
    log.info("backtest finished in %.1fs", runtime)
    return BacktestResult(records, data.asset_ids, meta, diagnostics if config.diagnostics else [])


def _select(spec: StrategySpec, s_idx: int, t: int, history: np.ndarray, candidates: CandidateSet, m: int, config: BacktestConfig, pool):
    if spec.kind == "uniform":
        w = uniform_portfolio(history.shape[1])
        return {"chosen_index": -1, "chosen": w, "rule_id": "uniform"}, []

    if spec.kind == "cpps":
        if config.window == "rolling":
            history = history[-config.rolling_months :]
        tasks = []
        for c_idx, w in enumerate(candidates):
            series = portfolio_return_series(w, history)
            model = spec.model
            if model.kind == "NN":
                model = replace(model, seed=_nn_seed(config.seed, s_idx, t, c_idx))
            tasks.append((series, config.grid, config.alpha, model, spec.refit))
        if pool is not None:
            chunk = max(1, math.ceil(len(tasks) / (4 * config.workers)))
            intervals = list(pool.map(_interval_task, tasks, chunksize=chunk))
        else:
            intervals = [_interval_task(task) for task in tasks]
        table = [
            IntervalEntry(i, candidates[i], pi.lower, pi.upper, pi.fallback) for i, pi in enumerate(intervals)
        ]
        out = hr_lr_select(table, m, config.shortlist)
        chosen = intervals[out.chosen_index]
        diag = []
        if config.diagnostics:
            for i, pi in enumerate(intervals):
                mask = pi.retained_mask
                diag.extend((i, float(r), float(p), bool(k), pi.fallback) for r, p, k in zip(pi.grid, pi.pvalues, mask))
        return {
            "chosen_index": out.chosen_index,
            "chosen": candidates[out.chosen_index],
            "lower": chosen.lower,
            "upper": chosen.upper,
            "fallback": chosen.fallback,
            "shortlist": out.shortlist,
            "rule_id": out.rule_id,
        }, diag

    forecasts = [baseline_forecast(spec, portfolio_return_series(w, history)) for w in candidates]
    out = point_forecast_select(forecasts, candidates.portfolios)
    f = forecasts[out.chosen_index]
    return {
        "chosen_index": out.chosen_index,
        "chosen": out.chosen,
        "lower": f,
        "upper": f,
        "shortlist": out.shortlist,
        "rule_id": out.rule_id,
    }, []


# -- coverage ------------------------------------------------------------------


@dataclass(frozen=True)
class CoverageResult:
    rate: float
    trials: int
    alpha: float
    rows: list[tuple]  # (trial, realized, lower, upper, covered, fallback)


def _coverage_trial(args):
    trial, process, T, alpha, spec, grid, refit, seed = args
    rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(trial,)))
    path = process.simulate(T + 1, rng)
    pi = prediction_interval(path[:T], grid, alpha, make_trainer(spec), refit=refit)
    realized = float(path[T])
    return (trial, realized, pi.lower, pi.upper, pi.contains(realized), pi.fallback)


def coverage_experiment(
    process: ProcessSpec,
    trials: int,
    T: int,
    alpha: float,
    seed: int = 0,
    model: ModelSpec | None = None,
    grid: HypothesisGrid | None = None,
    refit: bool | None = None,
    workers: int = 1,
) -> CoverageResult:
    """Share of seeded trials whose next value falls inside the interval hull [lower, upper]."""
    if trials < 50:
        raise ValueError(f"coverage needs at least 50 trials, got {trials}")
    model = model or ModelSpec.ar(1)
    grid = grid or HypothesisGrid.evenly_spaced(-6.0, 6.0, 0.05)
    tasks = [(i, process, T, alpha, model, grid, refit, seed) for i in range(trials)]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(_coverage_trial, tasks, chunksize=max(1, trials // (4 * workers))))
    else:
        rows = [_coverage_trial(task) for task in tasks]
    rate = sum(r[4] for r in rows) / trials
    return CoverageResult(rate, trials, alpha, rows)
