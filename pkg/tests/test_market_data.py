import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cpps.market_data import (
    ColumnMap,
    DataError,
    ReturnSeries,
    build_lag_features,
    load_prices,
    to_monthly_returns,
)


def write(tmp_path, text, name="p.csv"):
    path = tmp_path / name
    path.write_text(text)
    return path


def test_load_single_row(tmp_path):
    table = load_prices(write(tmp_path, "date,asset,price\n2009-01-30,AAPL,100.0\n"))
    assert len(table) == 1
    row = table.frame.iloc[0]
    assert (str(row["date"].date()), row["asset"], row["price"]) == ("2009-01-30", "AAPL", 100.0)


def test_zero_price_reports_line(tmp_path):
    path = write(tmp_path, "date,asset,price\n2009-01-30,AAPL,10\n2009-02-27,AAPL,0\n")
    with pytest.raises(DataError, match="non-positive price at line 3"):
        load_prices(path)


def test_duplicate_date_asset(tmp_path):
    path = write(tmp_path, "date,asset,price\n2009-01-30,AAPL,10\n2009-01-30,AAPL,11\n")
    with pytest.raises(DataError, match="duplicate"):
        load_prices(path)


def test_missing_file(tmp_path):
    with pytest.raises(DataError, match="not found"):
        load_prices(tmp_path / "nope.csv")


def test_unparseable_row_line_number(tmp_path):
    path = write(tmp_path, "date,asset,price\n2009-01-30,A,1\n2009-02-27,A,abc\n")
    with pytest.raises(DataError, match="line 3"):
        load_prices(path)
    path = write(tmp_path, "date,asset,price\nnot-a-date,A,1\n", "q.csv")
    with pytest.raises(DataError, match="line 2"):
        load_prices(path)


def test_missing_column(tmp_path):
    with pytest.raises(DataError, match="missing column"):
        load_prices(write(tmp_path, "day,asset,price\n2009-01-30,A,1\n"))


def test_alternative_column_names(tmp_path):
    path = write(tmp_path, "Day,Ticker,Close\n2009-01-30,A,1\n")
    table = load_prices(path, ColumnMap(date="Day", asset="Ticker", price="Close"))
    assert table.assets == ("A",)


def test_wide_layout_matches_long(tmp_path):
    wide = write(tmp_path, "date,A,B\n2009-01-30,100,50\n2009-02-27,110,55\n", "w.csv")
    long = write(tmp_path, "date,asset,price\n2009-01-30,A,100\n2009-02-27,A,110\n2009-01-30,B,50\n2009-02-27,B,55\n", "l.csv")
    rw = to_monthly_returns(load_prices(wide, ColumnMap(layout="wide")))
    rl = to_monthly_returns(load_prices(long))
    np.testing.assert_array_equal(rw.returns, rl.returns)
    assert rw.asset_ids == ("A", "B")


def test_ratio_return(tmp_path):
    r = to_monthly_returns(load_prices(write(tmp_path, "date,asset,price\n2009-01-30,A,100\n2009-02-27,A,110\n")))
    assert r.returns.shape == (1, 1)
    assert r.returns[0, 0] == pytest.approx(0.10, abs=1e-15)
    assert r.labels == ("2009-02",)


def test_constant_prices_zero_returns(tmp_path):
    text = "date,asset,price\n" + "".join(f"2009-{m:02d}-15,A,42\n" for m in range(1, 7))
    r = to_monthly_returns(load_prices(write(tmp_path, text)))
    assert np.all(r.returns == 0.0)


def test_up_then_down(tmp_path):
    text = "date,asset,price\n2009-01-30,A,100\n2009-02-27,A,110\n2009-03-31,A,99\n"
    r = to_monthly_returns(load_prices(write(tmp_path, text)))
    np.testing.assert_allclose(r.returns[:, 0], [0.10, -0.10], atol=1e-15)


def test_last_observation_of_month_is_used(tmp_path):
    text = "date,asset,price\n2009-01-05,A,1\n2009-01-30,A,100\n2009-02-02,A,500\n2009-02-27,A,110\n"
    r = to_monthly_returns(load_prices(write(tmp_path, text)))
    assert r.returns[0, 0] == pytest.approx(0.10)


def test_gap_month_is_an_error(tmp_path):
    text = "date,asset,price\n2009-01-30,A,1\n2009-02-27,A,1\n2009-03-31,A,1\n2009-01-30,B,1\n2009-03-31,B,1\n"
    with pytest.raises(DataError, match=r"asset B .*2009-02"):
        to_monthly_returns(load_prices(write(tmp_path, text)))


@settings(max_examples=40, deadline=None)
@given(
    prices=st.lists(st.floats(0.5, 500.0), min_size=2, max_size=24),
    scale=st.floats(1e-3, 1e3),
    power=st.integers(-8, 8),
)
def test_scale_invariance(tmp_path_factory, prices, scale, power):
    tmp = tmp_path_factory.mktemp("scale")

    def returns_for(factor, name):
        rows = "".join(f"{2000 + i // 12}-{i % 12 + 1:02d}-28,A,{p * factor!r}\n" for i, p in enumerate(prices))
        return to_monthly_returns(load_prices(write(tmp, "date,asset,price\n" + rows, name))).returns

    base = returns_for(1.0, "a.csv")
    assert base.shape[0] == len(prices) - 1  # never imputes or drops
    np.testing.assert_allclose(returns_for(scale, "b.csv"), base, rtol=1e-12, atol=1e-15)
    # power-of-two scaling is exact in binary floating point
    np.testing.assert_array_equal(returns_for(2.0**power, "c.csv"), base)


def test_return_series_rejects_bad_values():
    with pytest.raises(DataError):
        ReturnSeries(np.array([[0.1], [np.nan]]), ("A",))
    with pytest.raises(DataError):
        ReturnSeries(np.array([[-1.0]]), ("A",))


def test_lag_shift_by_one():
    lf = build_lag_features([1, 2, 3, 4], [1])
    np.testing.assert_array_equal(lf.periods, [2, 3, 4])
    np.testing.assert_array_equal(lf.rows, [[1], [2], [3]])


def test_lags_index_arithmetic():
    lf = build_lag_features([1, 2, 3, 4, 5], [1, 2, 4])
    np.testing.assert_array_equal(lf.periods, [5])
    np.testing.assert_array_equal(lf.rows, [[4, 3, 1]])


def test_lags_insufficient_history():
    with pytest.raises(DataError, match="insufficient history"):
        build_lag_features([1, 2, 3], [1, 2, 4])


@settings(max_examples=60, deadline=None)
@given(
    series=st.lists(st.floats(-1, 1, allow_nan=False), min_size=6, max_size=40),
    lags=st.sets(st.integers(1, 5), min_size=1, max_size=3),
)
def test_lag_round_trip_is_exact(series, lags):
    lags = sorted(lags)
    lf = build_lag_features(series, lags)
    for t in lf.periods:
        row = lf.row(int(t))
        for i, lag in enumerate(lags):
            assert row[i] == series[t - lag - 1]  # bitwise
    assert lf.periods[0] == max(lags) + 1
