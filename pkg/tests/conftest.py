import numpy as np
import pytest

from koopsym.harness import ExperimentConfig, duffing_setup

ACCEPTANCE_LINES = []


@pytest.fixture(scope="session")
def duffing():
    """Default Duffing training set, labels, indicator and test set."""
    return duffing_setup(ExperimentConfig())


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
