from fractions import Fraction

import numpy as np
import pytest

from marketmoments.trade_data import TickSeries

# three ticks used throughout: prices 2, 3, 4 with volumes 1, 2, 1
TICK3_PRICE = (2, 3, 4)
TICK3_VOLUME = (1, 2, 1)

ACCEPTANCE_LINES = []


def tick3_series(company="ACME"):
    return TickSeries.from_arrays([0, 1, 2], [company] * 3, TICK3_PRICE, TICK3_VOLUME)


def exact_power_mean(xs, m):
    xs = [Fraction(x) for x in xs]
    return sum(x ** m for x in xs) / len(xs)


def random_series(rng, n_companies, n_steps, unit_volume=False):
    """Dense random series built without the package's generator."""
    steps = np.tile(np.arange(n_steps), n_companies)
    names = np.repeat([f"C{q:03d}" for q in range(n_companies)], n_steps)
    logp = np.cumsum(rng.normal(0, 0.02, (n_companies, n_steps)), axis=1)
    price = (rng.uniform(5, 50, (n_companies, 1)) * np.exp(logp)).ravel()
    volume = np.ones(price.size) if unit_volume else rng.lognormal(3.0, 0.7, price.size)
    return TickSeries.from_arrays(steps, names, price, volume)


@pytest.fixture
def tick3():
    return tick3_series()


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
