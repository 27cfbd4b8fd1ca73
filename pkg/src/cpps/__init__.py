"""Conformal predictive portfolio selection."""

from .backtest import BacktestConfig, BacktestResult, coverage_experiment, cumulative_returns, run_backtest
from .conformal import HypothesisGrid, PredictionInterval, blocking_permutation, conformal_pvalue, prediction_interval
from .market_data import ReturnSeries, build_lag_features, load_prices, to_monthly_returns
from .models import ModelSpec, fit_ar, fit_nn, make_trainer
from .portfolio import CandidateSet, Portfolio, portfolio_return, simplex_grid
from .selection import hr_lr_select, point_forecast_select, uniform_portfolio

__version__ = "0.1.0"
