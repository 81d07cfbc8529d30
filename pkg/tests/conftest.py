import numpy as np
import pytest

from regime_bidask.model_core import ControlBox, RegimeModel

GEN = [[-1.0, 2.0], [1.0, -2.0]]
MU = [0.05, 0.03]
SIGMA = [0.2, 0.3]
RATE = [0.02, 0.02]


def standard_model(alpha=(1.0, 1.0)) -> RegimeModel:
    return RegimeModel.from_lists(GEN, MU, SIGMA, list(alpha), RATE)


def single_regime(mu=0.05, sigma=0.2, rate=0.02) -> RegimeModel:
    return RegimeModel.from_lists([[0.0]], [mu], [sigma], [1.0], [rate])


@pytest.fixture
def model() -> RegimeModel:
    return standard_model()


@pytest.fixture
def scaled_model() -> RegimeModel:
    return standard_model((1.0, 1.2))


@pytest.fixture
def box() -> ControlBox:
    return ControlBox.uniform(2, 0.5, 2.0)


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(20240611)


ACCEPTANCE_LINES: dict[int, str] = {}


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for k in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(ACCEPTANCE_LINES[k])
