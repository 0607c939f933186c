import numpy as np
import pytest

from bregprox.core import indicator
from bregprox.grid import Grid1D, SampledFunction

ACCEPTANCE_LINES = []


def sampled(grid, fn, label=""):
    return SampledFunction.from_callable(grid, fn, label)


def point(grid, p):
    return indicator(grid, [p], f"indicator{{{p:g}}}")


@pytest.fixture
def line_grid():
    return Grid1D.uniform(-4.0, 4.0, 2001)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
