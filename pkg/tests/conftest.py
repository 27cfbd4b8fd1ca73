import os

import numpy as np
import pytest
from hypothesis import settings

from cpps.market_data import ReturnSeries

# fixed example stream so a green run stays green; HYPOTHESIS_PROFILE=explore for fresh draws
settings.register_profile("repro", derandomize=True)
settings.register_profile("explore", derandomize=False)
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "repro"))

ACCEPTANCE_KEY = pytest.StashKey[list]()


def pytest_configure(config):
    config.stash[ACCEPTANCE_KEY] = []


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get(ACCEPTANCE_KEY, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)


@pytest.fixture
def criterion(request):
    """Record one PASS/FAIL line per acceptance criterion and print it in the summary."""

    def record(number: int, title: str, passed: bool, detail: str) -> bool:
        line = f"[{'PASS' if passed else 'FAIL'}] criterion {number}: {title} -- {detail}"
        request.config.stash[ACCEPTANCE_KEY].append(line)
        print(line)
        return passed

    return record


def ar_path(coef, n, x0=1.0):
    """Noiseless AR recursion y_t = sum coef_i * y_{t-i}, seeded with x0 then zeros."""
    y = [x0] + [0.0] * (len(coef) - 1)
    y = y[: max(1, len(coef))]
    while len(y) < n:
        y.append(sum(c * y[-1 - i] for i, c in enumerate(coef)))
    return np.array(y[:n])


@pytest.fixture
def small_returns():
    rng = np.random.default_rng(11)
    return ReturnSeries(rng.normal(0.01, 0.05, size=(60, 3)), ("A", "B", "C"))
