import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from hydro_tdrl.dataset import desk_instance
from hydro_tdrl.decomposition import estimate_bounds
from hydro_tdrl.env import ActionSpace

settings.register_profile("suite", deadline=None, max_examples=50,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("suite")

ACCEPTANCE_LINES: list[str] = []


@pytest.fixture(scope="session")
def desk():
    return desk_instance()


@pytest.fixture(scope="session")
def desk_bounds(desk):
    return estimate_bounds(desk, ActionSpace(), budget=2000, seed=0)


@pytest.fixture(scope="session")
def acceptance_log():
    return ACCEPTANCE_LINES


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
