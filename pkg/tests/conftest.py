import numpy as np
import pytest

from heatiss.system_model import SystemParams


@pytest.fixture
def unit():
    return SystemParams.uniform(a=1.0, b=1.0, c=1.0, r=1.0)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
