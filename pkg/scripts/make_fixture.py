"""Regenerate the bundled 3-asset synthetic price fixture."""

from pathlib import Path

from cpps.synthetic import synthetic_market, write_price_csv

OUT = Path(__file__).resolve().parents[1] / "src" / "cpps" / "data" / "fixture_prices.csv"

if __name__ == "__main__":
    returns = synthetic_market(seed=2009, n_periods=120, start="2009-01")
    write_price_csv(OUT, returns, first_month="2008-12")
    print(f"wrote {OUT}")
