"""``cpps`` command line: backtest, interval, coverage, candidates export/import."""

from __future__ import annotations

import argparse
import copy
import logging
import sys
from pathlib import Path

from . import config as cfgmod
from . import report
from .backtest import BacktestError, coverage_experiment, run_backtest
from .conformal import ConformalError, prediction_interval
from .market_data import DataError, load_prices, to_monthly_returns
from .models import TrainingError, make_trainer
from .portfolio import Portfolio, export_candidates, import_candidates, portfolio_return_series, simplex_grid

log = logging.getLogger("cpps")

# execution-only settings; kept out of run_meta so outputs match across worker counts and folders
_EXECUTION_KEYS = ("workers", "out_dir")


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="TOML run config (default: bundled synthetic fixture config)")
    p.add_argument("--seed", type=int)
    p.add_argument("--workers", type=int)
    p.add_argument("--alpha", type=float)
    p.add_argument("--out-dir")
    p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE", help="override any config key, e.g. grid.step=0.02")
    p.add_argument("--verbose", "-v", action="store_true")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="cpps", description="Conformal predictive portfolio selection")
    sub = parser.add_subparsers(dest="command", required=True)

    bt = sub.add_parser("backtest", help="run the rolling backtest and write CSV outputs")
    _common(bt)
    bt.add_argument("--m", type=int, help="HR-LR shortlist size")

    iv = sub.add_parser("interval", help="conformal interval for one portfolio")
    _common(iv)
    iv.add_argument("--weights", required=True, help="comma-separated weights, one per asset")
    iv.add_argument("--as-of", default="next", help="period to predict (label like 2015-06, index, or 'next')")
    iv.add_argument("--diagnostics", metavar="PATH", help="write per-r p-values to this CSV")

    cv = sub.add_parser("coverage", help="Monte Carlo coverage of the conformal interval")
    _common(cv)

    cand = sub.add_parser("candidates", help="export or import candidate portfolio sets")
    csub = cand.add_subparsers(dest="action", required=True)
    ex = csub.add_parser("export")
    ex.add_argument("--K", type=int, required=True)
    ex.add_argument("--G", type=int, default=10)
    ex.add_argument("--assets", help="comma-separated column names")
    ex.add_argument("--output", "-o", required=True)
    im = csub.add_parser("import")
    im.add_argument("path")
    im.add_argument("--verbose", "-v", action="store_true")
    return parser


def _resolved(args) -> dict:
    overrides = dict(cfgmod.parse_override(s) for s in args.set)
    for flag, key in (("seed", "run.seed"), ("workers", "run.workers"), ("alpha", None), ("out_dir", "run.out_dir"), ("m", "selection.m")):
        value = getattr(args, flag, None)
        if value is None:
            continue
        if flag == "alpha":
            key = "coverage.alpha" if args.command == "coverage" else "conformal.alpha"
        overrides[key] = value
    return cfgmod.load_config(args.config, overrides)


def _meta_text(cfg: dict) -> str:
    shown = copy.deepcopy(cfg)
    for key in _EXECUTION_KEYS:
        shown["run"].pop(key, None)
    return cfgmod.dump_config(shown)


def _load_returns(cfg: dict):
    if not cfg["data"]["prices"]:
        raise cfgmod.ConfigError("data.prices is not set")
    return to_monthly_returns(load_prices(cfg["data"]["prices"], cfgmod.column_map(cfg)))


def cmd_backtest(args) -> int:
    cfg = _resolved(args)
    data = _load_returns(cfg)
    bt_cfg = cfgmod.backtest_config(cfg)
    result = run_backtest(bt_cfg, data)
    out = Path(cfg["run"]["out_dir"])
    out.mkdir(parents=True, exist_ok=True)
    report.write_cumulative(result, out / "cumulative_returns.csv")
    report.write_selections(result, out / "selections.csv")
    if bt_cfg.diagnostics:
        report.write_diagnostics(result.diagnostics, out / "diagnostics.csv")
    meta = result.metadata
    report.write_run_meta(
        out / "run_meta.txt",
        _meta_text(cfg),
        {
            "seed": cfg["run"]["seed"],
            "candidates": meta["n_candidates"],
            "m": meta["m"],
            "fallback_counts": meta["fallback_counts"],
            "per_permutation_refit": meta["refit"],
        },
    )
    print(f"wrote {out / 'cumulative_returns.csv'} ({len(result.strategies)} strategies, {len(result.records[result.strategies[0]])} periods)")
    for name in result.strategies:
        print(f"  {name:>8s}  terminal cumulative return {result.terminal(name): .4f}")
    log.info("runtime %.1fs", meta["runtime_seconds"])
    return 0


def _parse_weights(text: str, K: int) -> Portfolio:
    try:
        weights = tuple(float(x) for x in text.split(","))
    except ValueError:
        raise cfgmod.ConfigError(f"invalid weights {text!r}") from None
    if len(weights) != K:
        raise cfgmod.ConfigError(f"expected {K} weights, got {len(weights)}")
    try:
        return Portfolio(weights)
    except ValueError as exc:
        raise cfgmod.ConfigError(f"invalid weights: {exc}") from None


def cmd_interval(args) -> int:
    cfg = _resolved(args)
    data = _load_returns(cfg)
    w = _parse_weights(args.weights, data.K)
    start = data.period_of(cfg["backtest"]["train_start"])
    target = data.T + 1 if args.as_of == "next" else data.period_of(args.as_of)
    history = data.returns[start - 1 : target - 1]
    series = portfolio_return_series(w, history)
    ar, nn = cfgmod.model_specs(cfg)
    kind = cfg["interval"]["model"].upper()
    spec, refit = (ar, cfg["conformal"]["refit_ar"]) if kind == "AR" else (nn, cfg["conformal"]["refit_nn"])
    if series.size < max(spec.lags) + len(spec.lags) + 2:
        raise DataError(f"insufficient history: {series.size} periods before the as-of period")
    alpha = cfg["conformal"]["alpha"]
    pi = prediction_interval(series, cfgmod.grid_from(cfg), alpha, make_trainer(spec), refit=refit)

    label = data.labels[target - 1] if target <= data.T else "next"
    print(f"portfolio: {w.label()}")
    print(f"as-of: {label}  history: {series.size} periods  permutations: {pi.n_permutations}  model: {kind}")
    print(f"alpha: {alpha}")
    print(f"interval: [{pi.lower!r}, {pi.upper!r}]")
    print("retained: " + " ".join(repr(float(r)) for r in pi.retained))
    print(f"fallback: {'yes' if pi.fallback else 'no'}")
    if args.verbose:
        print("r,p_value,retained")
        for r, p, k in zip(pi.grid, pi.pvalues, pi.retained_mask):
            print(f"{float(r)!r},{float(p)!r},{int(k)}")
    if args.diagnostics:
        rows = [(label, f"interval-{kind}", 0, float(r), float(p), bool(k), pi.fallback) for r, p, k in zip(pi.grid, pi.pvalues, pi.retained_mask)]
        report.write_diagnostics(rows, Path(args.diagnostics))
    return 0


def cmd_coverage(args) -> int:
    cfg = _resolved(args)
    settings = cfgmod.coverage_settings(cfg)
    result = coverage_experiment(**settings)
    out = Path(cfg["run"]["out_dir"])
    out.mkdir(parents=True, exist_ok=True)
    report.write_coverage(result, out / "coverage.csv")
    report.write_run_meta(out / "run_meta.txt", _meta_text(cfg), {"seed": cfg["run"]["seed"], "coverage": result.rate})
    print(f"coverage {result.rate:.4f} over {result.trials} trials (target {1 - result.alpha:.2f}, alpha {result.alpha})")
    return 0


def cmd_candidates(args) -> int:
    if args.action == "export":
        cands = simplex_grid(args.K, args.G)
        names = args.assets.split(",") if args.assets else None
        export_candidates(cands, args.output, names)
        print(f"wrote {len(cands)} portfolios to {args.output}")
        return 0
    cands, header = import_candidates(args.path)
    print(f"{len(cands)} valid portfolios over {cands.K} assets ({', '.join(header)})")
    if args.verbose:
        for i, p in enumerate(cands):
            print(i, p.label())
    return 0


COMMANDS = {"backtest": cmd_backtest, "interval": cmd_interval, "coverage": cmd_coverage, "candidates": cmd_candidates}


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if getattr(args, "verbose", False) else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        return COMMANDS[args.command](args)
    except (cfgmod.ConfigError, FileNotFoundError) as exc:
        print(f"error: config: {exc}", file=sys.stderr)
        return 2
    except (DataError, ValueError) as exc:
        print(f"error: data: {exc}", file=sys.stderr)
        return 2
    except (BacktestError, ConformalError, TrainingError) as exc:
        print(f"error: {type(exc).__module__.split('.')[-1]}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
