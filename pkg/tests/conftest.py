from fractions import Fraction as F

import numpy as np
import pytest

from delay_consensus.fixed_delay import DelayAssignment, augment_row
from delay_consensus.graph_core import DirectedGraph

# 3-node protocol with one delayed link, used throughout as a worked example
WORKED = [
    [F(2, 3), F(1, 3), F(0)],
    [F(1, 6), F(1, 3), F(1, 2)],
    [F(1, 6), F(1, 3), F(1, 2)],
]
WORKED_AUG = [
    [F(2, 3), F(1, 3), F(0), F(0), F(0)],
    [F(0), F(1, 3), F(1, 2), F(0), F(1, 6)],
    [F(1, 6), F(1, 3), F(1, 2), F(0), F(0)],
    [F(1), F(0), F(0), F(0), F(0)],
    [F(0), F(0), F(0), F(1), F(0)],
]


def as_array(rows) -> np.ndarray:
    return np.array([[float(v) for v in row] for row in rows])


@pytest.fixture
def worked():
    return as_array(WORKED)


@pytest.fixture
def worked_aug():
    return as_array(WORKED_AUG)


@pytest.fixture
def worked_graph(worked):
    return DirectedGraph.from_protocol(worked)


@pytest.fixture
def worked_delays():
    return DelayAssignment({(0, 1): 2})


@pytest.fixture
def worked_system(worked, worked_graph, worked_delays):
    return augment_row(worked, worked_delays, worked_graph)


# one line per acceptance criterion, printed after the run
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
