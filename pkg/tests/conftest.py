import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from glauber.geometry import Box, ModelParams
from glauber.potentials import HardCore, SoftGaussian, Strauss, Zero

settings.register_profile("default", deadline=None, max_examples=60,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

SHIPPED = [Zero(), Strauss(1.0, 0.5), HardCore(0.2), SoftGaussian(1.0, 0.1)]


@pytest.fixture
def unit_square():
    return Box((1.0, 1.0))


@pytest.fixture
def zero_params(unit_square):
    return ModelParams(1.0, Zero(), unit_square)


@pytest.fixture
def strauss_params(unit_square):
    return ModelParams(0.5, Strauss(1.0, 0.5), unit_square)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# one line per acceptance criterion, echoed in the terminal summary
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
