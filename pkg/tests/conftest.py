import numpy as np
import pytest

from starklap.operators import GridSpec


@pytest.fixture
def small_grid():
    return GridSpec(2, ((-6.0, 10.0), (-6.0, 6.0)), 0.5)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for line in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(line[1])
