import csv
from pathlib import Path

import pytest

from cpps.cli import main
from cpps.config import ConfigError, load_config, parse_override

FAST = ["--set", "candidates.resolution=4", "--set", "models.nn.epochs=30", "--set", "models.nn.hidden_units=8",
        "--set", "backtest.test_end=\"2013-06\""]


def run(capsys, *argv):
    code = main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


def files(folder: Path) -> dict:
    return {p.name: p.read_bytes() for p in sorted(folder.iterdir())}


def test_backtest_eight_columns(tmp_path, capsys):
    code, out, _ = run(capsys, "backtest", "--out-dir", str(tmp_path), *FAST)
    assert code == 0
    with (tmp_path / "cumulative_returns.csv").open() as fh:
        header = next(csv.reader(fh))
    assert header == ["period", "CPPS-AR", "CPPS-NN", "Mean[1]", "Mean[3]", "AR(1)", "AR(2)", "AR(3)", "Uniform"]
    assert {"selections.csv", "run_meta.txt"} <= set(files(tmp_path))
    assert "terminal cumulative return" in out


def test_backtest_bad_dates_exit_nonzero(tmp_path, capsys):
    code, _, err = run(capsys, "backtest", "--out-dir", str(tmp_path), "--set", 'backtest.test_start="2009-01"')
    assert code != 0 and err.startswith("error:")


def test_seed_repeat_byte_identical(tmp_path, capsys):
    a, b = tmp_path / "a", tmp_path / "b"
    for out in (a, b):
        assert run(capsys, "backtest", "--seed", "7", "--out-dir", str(out), *FAST)[0] == 0
    assert files(a) == files(b)


def test_override_recorded_in_meta(tmp_path, capsys):
    run(capsys, "backtest", "--out-dir", str(tmp_path), "--m", "3", *FAST)
    meta = (tmp_path / "run_meta.txt").read_text()
    assert "resolution = 4" in meta and "m = 3" in meta and "epochs = 30" in meta


def test_diagnostics_file(tmp_path, capsys):
    run(capsys, "backtest", "--out-dir", str(tmp_path), "--set", "run.diagnostics=true",
        "--set", 'backtest.strategies=["CPPS-AR"]', *FAST)
    with (tmp_path / "diagnostics.csv").open() as fh:
        rows = list(csv.DictReader(fh))
    assert rows and set(rows[0]) == {"period", "strategy", "portfolio_id", "r", "p_value", "retained", "fallback"}


def test_interval_alpha_below_floor_prints_grid(capsys):
    code, out, _ = run(capsys, "interval", "--weights", "1,0,0", "--alpha", "0.001")
    assert code == 0
    retained = next(line for line in out.splitlines() if line.startswith("retained:")).split()[1:]
    assert len(retained) == 61


def test_interval_verbose_pvalues(capsys):
    code, out, _ = run(capsys, "interval", "--weights", "0.2,0.3,0.5", "--as-of", "2015-06", "-v")
    assert code == 0
    history = int(out.split("history: ")[1].split()[0])
    rows = [line.split(",") for line in out.splitlines() if line.count(",") == 2 and line[0] in "-0123456789"]
    assert len(rows) == 61
    assert all(1 / history <= float(p) <= 1 for _, p, _ in rows)


def test_interval_constant_fixture(tmp_path, capsys):
    prices = tmp_path / "const.csv"
    lines = ["date,asset,price"]
    for i in range(40):
        month = f"{2009 + i // 12}-{i % 12 + 1:02d}-28"
        lines += [f"{month},A,{100 * 1.01 ** i!r}", f"{month},B,50"]
    prices.write_text("\n".join(lines) + "\n")
    cfg = tmp_path / "run.toml"
    cfg.write_text('[data]\nprices = "const.csv"\n[backtest]\ntrain_start = "2009-02"\n')
    code, out, _ = run(capsys, "interval", "--config", str(cfg), "--weights", "1,0")
    assert code == 0
    interval = out.split("interval: [")[1].split("]")[0]
    lo, hi = (float(x) for x in interval.split(","))
    assert lo - 0.005 <= 0.01 <= hi + 0.005  # within half a grid step of the constant


def test_interval_diagnostics(tmp_path, capsys):
    target = tmp_path / "d.csv"
    assert run(capsys, "interval", "--weights", "1,0,0", "--diagnostics", str(target))[0] == 0
    assert len(target.read_text().splitlines()) == 62


def test_interval_bad_weights(capsys):
    code, _, err = run(capsys, "interval", "--weights", "0.7,0.7,0")
    assert code == 2 and "weights" in err


def test_coverage_command(tmp_path, capsys):
    code, out, _ = run(capsys, "coverage", "--out-dir", str(tmp_path))
    assert code == 0 and "over 200 trials" in out
    first = (tmp_path / "coverage.csv").read_bytes()
    run(capsys, "coverage", "--out-dir", str(tmp_path))
    assert (tmp_path / "coverage.csv").read_bytes() == first


def test_coverage_zero_trials(capsys):
    code, _, err = run(capsys, "coverage", "--set", "coverage.trials=0")
    assert code == 2 and "trials" in err


def test_candidates_round_trip(tmp_path, capsys):
    target = tmp_path / "c.csv"
    assert run(capsys, "candidates", "export", "--K", "3", "--G", "4", "--assets", "A1,A2,A3", "-o", str(target))[0] == 0
    code, out, _ = run(capsys, "candidates", "import", str(target))
    assert code == 0 and out.startswith("15 valid portfolios over 3 assets")


def test_backtest_with_imported_candidates(tmp_path, capsys):
    target = tmp_path / "c.csv"
    run(capsys, "candidates", "export", "--K", "3", "--G", "2", "-o", str(target))
    code, _, _ = run(capsys, "backtest", "--out-dir", str(tmp_path / "o"), "--set", f'candidates.file="{target}"',
                     "--set", 'backtest.strategies=["CPPS-AR","Uniform"]', *FAST)
    assert code == 0
    assert "candidates: 6" in (tmp_path / "o" / "run_meta.txt").read_text()


def test_unknown_key(capsys):
    code, _, err = run(capsys, "backtest", "--set", "grid.stepp=0.1")
    assert code == 2 and "grid.stepp" in err
    with pytest.raises(ConfigError):
        load_config(None, {"nope.x": 1})


def test_parse_override():
    assert parse_override("grid.step=0.02") == ("grid.step", 0.02)
    assert parse_override("backtest.test_start=2015-01")[1] is not None
    assert parse_override('interval.model="NN"') == ("interval.model", "NN")
