"""Declarative run configuration: TOML file + dotted overrides, strict keys."""

from __future__ import annotations

import copy
import json
from pathlib import Path
from typing import Any

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from .backtest import DEFAULT_STRATEGIES, BacktestConfig, parse_strategy
from .conformal import HypothesisGrid
from .market_data import ColumnMap
from .models import ModelSpec
from .portfolio import import_candidates
from .synthetic import ProcessSpec

BUNDLED_DIR = Path(__file__).parent / "data"
BUNDLED_CONFIG = BUNDLED_DIR / "default.toml"

DEFAULTS: dict[str, dict[str, Any]] = {
    "data": {
        "prices": "",
        "layout": "long",
        "date_column": "date",
        "asset_column": "asset",
        "price_column": "price",
    },
    "backtest": {
        "train_start": "2009-01",
        "test_start": "2012-01",
        "test_end": "2018-12",
        "window": "expanding",
        "rolling_months": 36,
        "strategies": list(DEFAULT_STRATEGIES),
        "cumulative": "compound",
    },
    "conformal": {"alpha": 0.2, "refit_ar": True, "refit_nn": False},
    "grid": {"lower": -0.3, "upper": 0.3, "step": 0.01},
    "candidates": {"resolution": 10, "file": ""},
    "selection": {"m": 0, "shortlist": "highest"},
    "models": {
        "ar": {"order": 3},
        "nn": {"lags": [1, 2, 4], "hidden_units": 100, "epochs": 500, "learning_rate": 0.01},
    },
    "run": {"seed": 0, "workers": 1, "out_dir": "out", "diagnostics": False},
    "interval": {"model": "AR"},
    "coverage": {
        "process": "ar1",
        "coefficient": 0.5,
        "noise_sd": 1.0,
        "constant": 0.0,
        "burn_in": 50,
        "trials": 200,
        "T": 60,
        "alpha": 0.2,
        "order": 1,
        "refit": True,
        "grid_lower": -6.0,
        "grid_upper": 6.0,
        "grid_step": 0.05,
    },
}


class ConfigError(ValueError):
    pass


def _check_type(key: str, value, default):
    if isinstance(default, bool):
        ok = isinstance(value, bool)
    elif isinstance(default, float):
        ok = isinstance(value, (int, float)) and not isinstance(value, bool)
        value = float(value) if ok else value
    elif isinstance(default, int):
        ok = isinstance(value, int) and not isinstance(value, bool)
    elif isinstance(default, list):
        ok = isinstance(value, list)
    else:
        ok = isinstance(value, str)
    if not ok:
        raise ConfigError(f"config key {key!r} expects {type(default).__name__}, got {value!r}")
    return value


def _merge(base: dict, update: dict, prefix: str = "") -> None:
    for key, value in update.items():
        dotted = f"{prefix}{key}"
        if key not in base:
            raise ConfigError(f"unknown config key {dotted!r}")
        if isinstance(base[key], dict):
            if not isinstance(value, dict):
                raise ConfigError(f"config key {dotted!r} must be a table")
            _merge(base[key], value, dotted + ".")
        else:
            base[key] = _check_type(dotted, value, base[key])


def parse_override(text: str) -> tuple[str, Any]:
    """``key.path=value``; the value is read as a TOML literal, else kept as a string."""
    if "=" not in text:
        raise ConfigError(f"override {text!r} must look like key=value")
    key, raw = text.split("=", 1)
    try:
        value = tomllib.loads(f"v = {raw.strip()}")["v"]
    except tomllib.TOMLDecodeError:
        value = raw.strip()
    return key.strip(), value


def _nest(dotted: str, value) -> dict:
    out: dict = {}
    node = out
    parts = dotted.split(".")
    for part in parts[:-1]:
        node = node.setdefault(part, {})
    node[parts[-1]] = value
    return out


def load_config(path: str | Path | None = None, overrides: dict[str, Any] | None = None) -> dict:
    """Resolved config tree: defaults <- file <- overrides. Paths resolve against the file's folder."""
    cfg = copy.deepcopy(DEFAULTS)
    path = Path(path) if path else BUNDLED_CONFIG
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}")
    try:
        raw = tomllib.loads(path.read_text(encoding="utf-8"))
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from None
    _merge(cfg, raw)
    for dotted, value in (overrides or {}).items():
        _merge(cfg, _nest(dotted, value))
    base = path.resolve().parent
    for section, key in (("data", "prices"), ("candidates", "file")):
        value = cfg[section][key]
        if value and not Path(value).is_absolute():
            cfg[section][key] = str((base / value).resolve())
    validate(cfg)
    return cfg


def validate(cfg: dict) -> None:
    if cfg["data"]["layout"] not in ("long", "wide"):
        raise ConfigError("data.layout must be 'long' or 'wide'")
    if not 0 < cfg["conformal"]["alpha"] < 1:
        raise ConfigError("conformal.alpha must lie in (0, 1)")
    if not 0 < cfg["coverage"]["alpha"] < 1:
        raise ConfigError("coverage.alpha must lie in (0, 1)")
    if cfg["coverage"]["trials"] < 50:
        raise ConfigError(f"coverage.trials must be at least 50, got {cfg['coverage']['trials']}")
    if cfg["run"]["workers"] < 1:
        raise ConfigError("run.workers must be >= 1")
    if cfg["selection"]["m"] < 0:
        raise ConfigError("selection.m must be >= 0 (0 picks the default)")
    if cfg["selection"]["shortlist"] not in ("highest", "lowest"):
        raise ConfigError("selection.shortlist must be 'highest' or 'lowest'")
    if cfg["interval"]["model"].upper() not in ("AR", "NN"):
        raise ConfigError("interval.model must be 'AR' or 'NN'")
    for name in cfg["backtest"]["strategies"]:
        try:
            parse_strategy(name)
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
    try:
        grid_from(cfg)
        model_specs(cfg)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


def column_map(cfg: dict) -> ColumnMap:
    d = cfg["data"]
    return ColumnMap(d["date_column"], d["asset_column"], d["price_column"], d["layout"])


def grid_from(cfg: dict) -> HypothesisGrid:
    g = cfg["grid"]
    return HypothesisGrid.evenly_spaced(g["lower"], g["upper"], g["step"])


def model_specs(cfg: dict) -> tuple[ModelSpec, ModelSpec]:
    nn = cfg["models"]["nn"]
    ar = ModelSpec.ar(cfg["models"]["ar"]["order"])
    nn_spec = ModelSpec.nn(
        lags=tuple(nn["lags"]),
        hidden_units=nn["hidden_units"],
        epochs=nn["epochs"],
        learning_rate=nn["learning_rate"],
        seed=cfg["run"]["seed"],
    )
    return ar, nn_spec


def backtest_config(cfg: dict) -> BacktestConfig:
    ar, nn = model_specs(cfg)
    conf = cfg["conformal"]
    strategies = tuple(
        parse_strategy(s, ar, nn, conf["refit_ar"], conf["refit_nn"]) for s in cfg["backtest"]["strategies"]
    )
    candidates = None
    if cfg["candidates"]["file"]:
        candidates, _ = import_candidates(cfg["candidates"]["file"])
    b = cfg["backtest"]
    try:
        return BacktestConfig(
            train_start=b["train_start"],
            test_start=b["test_start"],
            test_end=b["test_end"],
            strategies=strategies,
            alpha=conf["alpha"],
            m=cfg["selection"]["m"] or None,
            grid=grid_from(cfg),
            candidates=candidates,
            resolution=cfg["candidates"]["resolution"],
            window=b["window"],
            rolling_months=b["rolling_months"],
            shortlist=cfg["selection"]["shortlist"],
            cumulative=b["cumulative"],
            seed=cfg["run"]["seed"],
            workers=cfg["run"]["workers"],
            diagnostics=cfg["run"]["diagnostics"],
        )
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


def coverage_settings(cfg: dict) -> dict:
    c = cfg["coverage"]
    try:
        process = ProcessSpec(c["process"], c["coefficient"], c["noise_sd"], c["constant"], c["burn_in"])
        grid = HypothesisGrid.evenly_spaced(c["grid_lower"], c["grid_upper"], c["grid_step"])
        model = ModelSpec.ar(c["order"])
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    return {
        "process": process,
        "trials": c["trials"],
        "T": c["T"],
        "alpha": c["alpha"],
        "seed": cfg["run"]["seed"],
        "model": model,
        "grid": grid,
        "refit": c["refit"],
        "workers": cfg["run"]["workers"],
    }


def _toml_value(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, int):
        return str(value)
    if isinstance(value, list):
        return "[" + ", ".join(_toml_value(v) for v in value) + "]"
    return json.dumps(value)


def dump_config(cfg: dict, prefix: str = "") -> str:
    """TOML text of the resolved tree, in schema order."""
    lines: list[str] = []
    scalars = [(k, v) for k, v in cfg.items() if not isinstance(v, dict)]
    tables = [(k, v) for k, v in cfg.items() if isinstance(v, dict)]
    if prefix and scalars:
        lines.append(f"[{prefix}]")
    lines.extend(f"{k} = {_toml_value(v)}" for k, v in scalars)
    if scalars:
        lines.append("")
    for k, v in tables:
        lines.append(dump_config(v, f"{prefix}.{k}" if prefix else k))
    return "\n".join(lines)
