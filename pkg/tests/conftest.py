import numpy as np
import pytest

from cfgenergy.diffusion import build_noise_schedule, make_timestep_grid
from cfgenergy.oracle import make_conditional_pair, standard_normal_scenario, two_mode_scenario


@pytest.fixture(scope="session")
def schedule():
    return build_noise_schedule("linear", 1000, 1e-4, 0.02)


@pytest.fixture(scope="session")
def grid50(schedule):
    return make_timestep_grid(schedule, 50)


@pytest.fixture(scope="session")
def gauss_pair():
    return make_conditional_pair(standard_normal_scenario(8))


@pytest.fixture(scope="session")
def two_mode_pair():
    return make_conditional_pair(two_mode_scenario(8))


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def pytest_terminal_summary(terminalreporter):
    import sys

    mod = sys.modules.get("test_acceptance") or sys.modules.get("tests.test_acceptance")
    if mod is not None and mod.RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in mod.RESULTS:
            terminalreporter.write_line(line)
