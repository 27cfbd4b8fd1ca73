import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cpps.market_data import DataError
from cpps.models import (
    ModelSpec,
    TrainedModel,
    TrainingError,
    finite_difference_gradient_check,
    fit_ar,
    fit_linear,
    fit_nn,
    fit_nn_xy,
    init_nn_params,
    make_trainer,
    nn_loss_and_grad,
    predict,
)

from conftest import ar_path


def test_constant_series_min_norm():
    model = fit_ar([0.03] * 30, 3)
    np.testing.assert_allclose(model.params["coef"], [0.03, 0, 0, 0], atol=1e-12)
    assert model.predict([0.03, 0.03, 0.03]) == pytest.approx(0.03, abs=1e-12)


def test_ar1_recovery():
    model = fit_ar(ar_path([0.5], 20), 1)
    c0, c1 = model.params["coef"]
    assert abs(c0) < 1e-9 and abs(c1 - 0.5) < 1e-9


def test_ar2_recovery():
    y = [1.0, 0.5]
    while len(y) < 40:
        y.append(0.3 * y[-1] - 0.2 * y[-2])
    coef = fit_ar(y, 2).params["coef"]
    np.testing.assert_allclose(coef[1:], [0.3, -0.2], atol=1e-9)


def test_ar_too_short():
    with pytest.raises(DataError):
        fit_ar([0.1, 0.2, 0.3], 3)


def test_ar_lags_must_be_contiguous():
    with pytest.raises(ValueError):
        ModelSpec(kind="AR", lags=(1, 3))


def test_predict_examples():
    m1 = TrainedModel(ModelSpec.ar(1), {"coef": np.array([0.0, 0.5])})
    assert predict(m1, [0.2]) == pytest.approx(0.1, abs=1e-15)
    m2 = TrainedModel(ModelSpec.ar(2), {"coef": np.array([0.01, 0.3, -0.2])})
    assert predict(m2, [0.1, 0.05]) == pytest.approx(0.03, abs=1e-15)


def test_predict_feature_count_checked():
    m1 = TrainedModel(ModelSpec.ar(1), {"coef": np.array([0.0, 0.5])})
    with pytest.raises(ValueError):
        m1.predict([0.1, 0.2])


def zero_net(spec, b2=0.25):
    p = init_nn_params(len(spec.lags), spec.hidden_units, 0)
    p = {k: np.zeros_like(np.asarray(v, dtype=float)) for k, v in p.items()}
    p["b2"] = b2
    p["x_mean"] = np.zeros(len(spec.lags))
    p["x_scale"] = np.ones(len(spec.lags))
    return TrainedModel(spec, p)


def test_zero_weight_net_outputs_bias():
    spec = ModelSpec.nn(lags=(1, 2), hidden_units=4)
    model = zero_net(spec, 0.25)
    np.testing.assert_array_equal(model.predict(np.random.default_rng(0).normal(size=(5, 2))), 0.25)


def test_nn_zero_series():
    model = fit_nn(np.zeros(30), ModelSpec.nn(lags=(1, 2, 4), hidden_units=10, epochs=500))
    assert abs(model.predict([0.0, 0.0, 0.0])) < 1e-3


def test_nn_bit_identical():
    y = np.random.default_rng(4).normal(size=40)
    spec = ModelSpec.nn(lags=(1, 2), hidden_units=8, epochs=50, seed=9)
    a, b = fit_nn(y, spec), fit_nn(y, spec)
    for key in a.params:
        assert np.array_equal(a.params[key], b.params[key])


def test_nn_loss_decreases():
    y = ar_path([0.5], 30)
    spec = ModelSpec.nn(lags=(1,), hidden_units=10, epochs=300, seed=1)
    trained = fit_nn(y, spec)
    untrained = fit_nn(y, ModelSpec.nn(lags=(1,), hidden_units=10, epochs=0, seed=1))
    X, t = y[:-1].reshape(-1, 1), y[1:]
    mse = lambda m: float(np.mean((m.predict(X) - t) ** 2))
    assert mse(trained) < mse(untrained)


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_nn_divergence_is_reported():
    y = np.random.default_rng(0).normal(size=30) * 1e150
    with pytest.raises(TrainingError, match="diverged at epoch"):
        fit_nn_xy(np.arange(60.0).reshape(-1, 2), y, ModelSpec.nn(lags=(1, 2), hidden_units=4, epochs=20, learning_rate=10.0))


def test_gradient_check_tiny_net():
    rng = np.random.default_rng(5)
    spec = ModelSpec.nn(lags=(1, 2), hidden_units=3, seed=2)
    X, y = rng.normal(size=(10, 2)), rng.normal(size=10)
    err = finite_difference_gradient_check(spec, X, y, eps=1e-5)
    assert err < 1e-4
    assert err == finite_difference_gradient_check(spec, X, y, eps=1e-5)


def test_zero_weight_output_bias_gradient():
    rng = np.random.default_rng(6)
    spec = ModelSpec.nn(lags=(1,), hidden_units=3)
    X, y = rng.normal(size=(8, 1)), rng.normal(size=8)
    params = {"W1": np.zeros((1, 3)), "b1": np.zeros(3), "W2": np.zeros(3), "b2": 0.0}
    _, grads = nn_loss_and_grad(params, X, y)
    assert grads["b2"] == pytest.approx(-2 * np.mean(y), rel=1e-12)
    assert finite_difference_gradient_check(spec, X, y, params=params) < 1e-4


def test_make_trainer_kinds():
    assert make_trainer(ModelSpec.ar(2)).linear
    assert not make_trainer(ModelSpec.nn()).linear


@settings(max_examples=40, deadline=None)
@given(
    coef=st.lists(st.floats(0.1, 0.45) | st.floats(-0.45, -0.1), min_size=1, max_size=3),
    n=st.integers(20, 40),
)
def test_ar_recovery_property(coef, n):
    y = np.random.default_rng(n).normal(size=len(coef))
    y = list(y)
    while len(y) < n:
        y.append(sum(c * y[-1 - i] for i, c in enumerate(coef)))
    got = fit_ar(y, len(coef)).params["coef"]
    assert abs(got[0]) < 1e-9
    np.testing.assert_allclose(got[1:], coef, atol=1e-9)


@settings(max_examples=30, deadline=None)
@given(shift=st.floats(-5, 5), data=st.lists(st.floats(-1, 1), min_size=12, max_size=30))
def test_ar_intercept_shift_equivariance(shift, data):
    base = fit_linear(np.array(data[:-1]).reshape(-1, 1), np.array(data[1:]))
    shifted = fit_linear(np.array(data[:-1]).reshape(-1, 1), np.array(data[1:]) + shift)
    assert shifted.params["coef"][0] == pytest.approx(base.params["coef"][0] + shift, abs=1e-9)
    assert shifted.params["coef"][1] == pytest.approx(base.params["coef"][1], abs=1e-9)
