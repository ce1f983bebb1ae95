import numpy as np
import pytest

from halflap.energy import EnergyContext
from halflap.grid_spectral import Grid1D
from halflap.model import catalog

# filled by test_acceptance: criterion number -> (passed, summary line)
ACCEPTANCE = {}


@pytest.fixture(scope="session")
def models():
    return catalog()


@pytest.fixture(scope="session")
def grid40():
    return Grid1D(40.0, 4096)


@pytest.fixture(scope="session")
def small_grid():
    return Grid1D(10.0, 256)


@pytest.fixture(scope="session")
def ctx_p(grid40, models):
    return EnergyContext(grid40, models["P-exp"])


@pytest.fixture(scope="session")
def ctx_q(grid40, models):
    return EnergyContext(grid40, models["Q-exp"])


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        terminalreporter.write_line(ACCEPTANCE[n][1])
