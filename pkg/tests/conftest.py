import numpy as np
import pytest

from decbary.entropic_dual import LocalDual
from decbary.measures import CostFunction, Discrete, SupportGrid

ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


def random_discrete_locals(rng, m, n, atoms=4, gamma=0.1, lo=-1.0, hi=1.0):
    """``m`` discrete measures on a line grid of ``n`` points."""
    grid = SupportGrid.line(lo, hi, n)
    cost = CostFunction("squared_euclidean")
    out = []
    for _ in range(m):
        d = Discrete(rng.uniform(lo, hi, atoms), rng.uniform(0.1, 1.0, atoms), "line")
        out.append(LocalDual(d, grid, cost, gamma))
    return out


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
