import functools

import pytest

from sizestruct import config
from sizestruct.equilibrium import solve_equilibrium, trivial_equilibrium
from sizestruct.spectrum import CharacteristicFunction, linear_coefficients


@functools.lru_cache(maxsize=None)
def preset(name):
    return config.load_preset(name)


@functools.lru_cache(maxsize=None)
def analysis(name, target="positive"):
    """(rates, grid, dgrid, eq, lc, K) for a preset at its analysis resolution."""
    cfg = preset(name)
    r, grid, dgrid = cfg.rates(), cfg.size_grid(), cfg.delay_grid()
    eq = trivial_equilibrium(r, grid) if target == "trivial" else solve_equilibrium(r, grid, dgrid)
    lc = linear_coefficients(r, eq)
    return r, grid, dgrid, eq, lc, CharacteristicFunction(r, eq, lc, dgrid)


@pytest.fixture
def ex72_stable():
    return analysis("ex72-stable")


def pytest_terminal_summary(terminalreporter):
    try:
        from test_acceptance import RESULTS
    except ImportError:
        return
    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in RESULTS:
            terminalreporter.write_line(line)
