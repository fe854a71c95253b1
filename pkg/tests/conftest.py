import warnings

import numpy as np
import pytest

from prtnep.casefile import load_case
from prtnep.network import Bus, Corridor, Generator, NetworkCase

GARVER_DC_FOR_PLAN = {"2-6": 3, "3-5": 2, "4-6": 3}
GARVER_AC_N1_PLAN = {"2-3": 2, "2-6": 3, "3-5": 2, "4-6": 3}
GARVER_AC_CRISP_PLAN = {"2-6": 2, "3-5": 2, "4-6": 2}


@pytest.fixture(scope="session")
def garver_dc():
    return load_case("garver6-dc")


@pytest.fixture(scope="session")
def garver_ac():
    return load_case("garver6-ac")


def ring3(r=0.0, b=0.0, n0=(1, 1, 1)) -> NetworkCase:
    """Three-bus ring: slack at 1, a PV unit at 2, load at 3."""
    buses = (
        Bus(1, "slack", 0.0, 0.0, v_set=1.02),
        Bus(2, "pv", 20.0, 5.0, v_set=1.01),
        Bus(3, "pq", 100.0, 30.0),
    )
    gens = (
        Generator(1, 1, "thermal", 0.0, 300.0, -100.0, 100.0, p_base=60.0, participation=0.5),
        Generator(2, 2, "thermal", 0.0, 300.0, -100.0, 100.0, p_base=60.0, participation=0.5),
    )
    cors = (
        Corridor(1, 1, 2, r, 0.10, b, 200.0, 10.0, n0[0], 2),
        Corridor(2, 2, 3, r, 0.20, b, 200.0, 20.0, n0[1], 2),
        Corridor(3, 1, 3, r, 0.25, b, 200.0, 25.0, n0[2], 2),
    )
    return NetworkCase("ring3", 100.0, buses, gens, cors)


@pytest.fixture
def quiet():
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        yield


def rng(seed=0):
    return np.random.default_rng(seed)


# one line per acceptance criterion, echoed in the terminal summary
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
