import numpy as np
import pytest

from mmfe.core import PopulationDistribution, StateGrid

_ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in _ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture
def record_criterion():
    """Record a one-line pass/fail verdict shown in the terminal summary."""

    def record(number, name, ok, detail):
        line = f"criterion {number} [{'PASS' if ok else 'FAIL'}] {name}: {detail}"
        _ACCEPTANCE_LINES.append(line)
        print(line)
        return ok

    return record


def dist(mass, n=None):
    mass = np.asarray(mass, dtype=float)
    return PopulationDistribution(mass, StateGrid(n or mass.size - 1))
