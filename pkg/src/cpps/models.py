"""Univariate return forecasters: AR(p) by least squares and a one-hidden-layer net.

Both model kinds share one contract: a *trainer* maps ``(X, y)`` to a
:class:`TrainedModel`, and ``TrainedModel.predict`` maps lag features to
point forecasts. The conformal engine only relies on that contract.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Callable, Sequence

import numpy as np

from .market_data import DataError, build_lag_features


class TrainingError(RuntimeError):
    pass


@dataclass(frozen=True)
class ModelSpec:
    kind: str = "AR"
    lags: tuple[int, ...] = (1, 2, 3)
    hidden_units: int = 100
    epochs: int = 500
    learning_rate: float = 1e-2
    seed: int = 0

    def __post_init__(self):
        kind = self.kind.upper()
        if kind not in ("AR", "NN"):
            raise ValueError(f"unknown model kind {self.kind!r}")
        lags = tuple(int(l) for l in self.lags)
        if not lags or min(lags) < 1 or len(set(lags)) != len(lags):
            raise ValueError(f"lags must be distinct positive integers, got {self.lags}")
        if kind == "AR" and lags != tuple(range(1, len(lags) + 1)):
            raise ValueError(f"AR lags must be contiguous 1..p, got {lags}")
        if kind == "NN" and (self.hidden_units < 1 or self.epochs < 0 or self.learning_rate <= 0):
            raise ValueError("NN needs hidden_units >= 1, epochs >= 0, learning_rate > 0")
        object.__setattr__(self, "kind", kind)
        object.__setattr__(self, "lags", lags)

    @classmethod
    def ar(cls, p: int) -> "ModelSpec":
        return cls(kind="AR", lags=tuple(range(1, p + 1)))

    @classmethod
    def nn(cls, lags=(1, 2, 4), **kw) -> "ModelSpec":
        return cls(kind="NN", lags=tuple(lags), **kw)


@dataclass(frozen=True)
class TrainedModel:
    spec: ModelSpec
    params: dict = field(repr=False)
    training_window: tuple[int, int] | None = None

    def predict(self, features) -> np.ndarray | float:
        X = np.asarray(features, dtype=float)
        single = X.ndim == 1
        X2 = X.reshape(1, -1) if single else X
        if X2.shape[1] != len(self.spec.lags):
            raise ValueError(f"expected {len(self.spec.lags)} features, got {X2.shape[1]}")
        if self.spec.kind == "AR":
            out = self.params["coef"][0] + X2 @ self.params["coef"][1:]
        else:
            Z = (X2 - self.params["x_mean"]) / self.params["x_scale"]
            out = _nn_forward(self.params, Z)[0]
        return float(out[0]) if single else out


def predict(model: TrainedModel, features) -> float | np.ndarray:
    return model.predict(features)


def _lagged(series, lags) -> tuple[np.ndarray, np.ndarray]:
    lf = build_lag_features(series, lags)
    y = np.asarray(series, dtype=float)[lf.periods - 1]
    return lf.rows, y


# -- AR -------------------------------------------------------------------


def centered_svd(X: np.ndarray):
    """Thin SVD of the centered lag columns, truncated to numerically nonzero directions."""
    Xc = X - X.mean(axis=0)
    U, s, Vt = np.linalg.svd(Xc, full_matrices=False)
    # absolute floor keeps rounding noise in near-constant columns from being inverted
    scale = max(1.0, float(np.abs(X).max())) if X.size else 1.0
    cutoff = max(1e-12 * (s[0] if s.size else 0.0), 1e-10 * np.sqrt(len(X)) * scale)
    keep = s > cutoff
    return U[:, keep], s[keep], Vt[keep]


def fit_linear(X, y, spec: ModelSpec | None = None) -> TrainedModel:
    """OLS with an unpenalized intercept.

    Singular designs get the minimum-norm lag coefficients, so a constant
    series yields intercept equal to the constant and zero lag weights.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    spec = spec or ModelSpec.ar(X.shape[1])
    if len(y) < 1 or X.ndim != 2 or X.shape[0] != len(y):
        raise DataError(f"need matching, non-empty design and targets, got {X.shape} and {y.shape}")
    U, s, Vt = centered_svd(X)
    beta = Vt.T @ ((U.T @ (y - y.mean())) / s)
    coef = np.concatenate([[y.mean() - X.mean(axis=0) @ beta], beta])
    if not np.all(np.isfinite(coef)):
        raise TrainingError("non-finite AR coefficients")
    return TrainedModel(spec, {"coef": coef})


def fit_ar(series: Sequence[float], p: int) -> TrainedModel:
    y = np.asarray(series, dtype=float)
    if len(y) < p + 2:
        raise DataError(f"AR({p}) needs at least {p + 2} observations, got {len(y)}")
    spec = ModelSpec.ar(p)
    X, target = _lagged(y, spec.lags)
    model = fit_linear(X, target, spec)
    return replace(model, training_window=(1, len(y)))


# -- feedforward net --------------------------------------------------------


def _nn_forward(params: dict, Z: np.ndarray):
    pre = Z @ params["W1"] + params["b1"]
    hidden = np.maximum(pre, 0.0)
    out = hidden @ params["W2"] + params["b2"]
    return out, pre, hidden


def init_nn_params(n_in: int, hidden: int, seed: int) -> dict:
    """Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) init from a seeded generator."""
    rng = np.random.default_rng(seed)
    s1 = 1.0 / np.sqrt(n_in)
    s2 = 1.0 / np.sqrt(hidden)
    return {
        "W1": rng.uniform(-s1, s1, size=(n_in, hidden)),
        "b1": rng.uniform(-s1, s1, size=hidden),
        "W2": rng.uniform(-s2, s2, size=hidden),
        "b2": float(rng.uniform(-s2, s2)),
    }


def nn_loss_and_grad(params: dict, Z: np.ndarray, y: np.ndarray) -> tuple[float, dict]:
    """Mean squared error and its gradient with respect to every parameter."""
    n = len(y)
    out, pre, hidden = _nn_forward(params, Z)
    resid = out - y
    loss = float(resid @ resid) / n
    d_out = 2.0 * resid / n
    d_hidden = np.outer(d_out, params["W2"]) * (pre > 0)
    grads = {
        "W2": hidden.T @ d_out,
        "b2": float(d_out.sum()),
        "W1": Z.T @ d_hidden,
        "b1": d_hidden.sum(axis=0),
    }
    return loss, grads


def _standardizer(X: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    mean = X.mean(axis=0)
    scale = X.std(axis=0)
    scale = np.where(scale > 1e-12, scale, 1.0)
    return mean, scale


def fit_nn_xy(X, y, spec: ModelSpec) -> TrainedModel:
    """Full-batch gradient descent on MSE; bit-for-bit reproducible given spec.seed."""
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    if len(y) < 2:
        raise DataError("NN training needs at least 2 rows")
    mean, scale = _standardizer(X)
    Z = (X - mean) / scale
    params = init_nn_params(X.shape[1], spec.hidden_units, spec.seed)
    lr = spec.learning_rate
    for epoch in range(spec.epochs):
        loss, grads = nn_loss_and_grad(params, Z, y)
        if not np.isfinite(loss):
            raise TrainingError(f"NN training diverged at epoch {epoch}")
        params["W1"] -= lr * grads["W1"]
        params["b1"] -= lr * grads["b1"]
        params["W2"] -= lr * grads["W2"]
        params["b2"] -= lr * grads["b2"]
    params["x_mean"] = mean
    params["x_scale"] = scale
    for v in params.values():
        if not np.all(np.isfinite(v)):
            raise TrainingError(f"NN training diverged at epoch {spec.epochs}")
    return TrainedModel(spec, params)


def fit_nn(series: Sequence[float], spec: ModelSpec) -> TrainedModel:
    y = np.asarray(series, dtype=float)
    if len(y) <= max(spec.lags) + 1:
        raise DataError(f"NN with lags {spec.lags} needs more than {max(spec.lags) + 1} observations")
    X, target = _lagged(y, spec.lags)
    model = fit_nn_xy(X, target, spec)
    return replace(model, training_window=(1, len(y)))


def finite_difference_gradient_check(spec: ModelSpec, X, y, eps: float = 1e-5, params: dict | None = None) -> float:
    """Largest relative gap between backprop and central-difference gradients."""
    Z = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    params = params if params is not None else init_nn_params(Z.shape[1], spec.hidden_units, spec.seed)
    params = {k: np.array(v, dtype=float) for k, v in params.items()}
    _, grads = nn_loss_and_grad(params, Z, y)
    worst = 0.0
    for name, value in params.items():
        analytic = np.atleast_1d(np.asarray(grads[name], dtype=float)).ravel()
        flat = value.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + eps
            up, _ = nn_loss_and_grad(params, Z, y)
            flat[i] = orig - eps
            down, _ = nn_loss_and_grad(params, Z, y)
            flat[i] = orig
            numeric = (up - down) / (2 * eps)
            denom = max(abs(analytic[i]), abs(numeric), 1e-7)
            worst = max(worst, abs(analytic[i] - numeric) / denom)
    return worst


# -- trainer factory ----------------------------------------------------------

Trainer = Callable[[np.ndarray, np.ndarray], TrainedModel]


class LinearTrainer:
    """AR trainer; ``linear`` lets the conformal engine use exact refit algebra."""

    linear = True

    def __init__(self, spec: ModelSpec):
        self.spec = spec

    def __call__(self, X, y) -> TrainedModel:
        return fit_linear(X, y, self.spec)


class NNTrainer:
    linear = False

    def __init__(self, spec: ModelSpec):
        self.spec = spec

    def __call__(self, X, y) -> TrainedModel:
        return fit_nn_xy(X, y, self.spec)


def make_trainer(spec: ModelSpec) -> Trainer:
    return LinearTrainer(spec) if spec.kind == "AR" else NNTrainer(spec)
