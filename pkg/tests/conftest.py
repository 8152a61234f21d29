import numpy as np
import pytest

from teleport_ensemble.analysis import FiniteInstance

# acceptance-criterion verdicts, echoed in the terminal summary
CRITERIA = {}


def record_criterion(number, passed, detail):
    line = f"CRITERION {number:2d}: {'PASS' if passed else 'FAIL'}  {detail}"
    CRITERIA[number] = line
    print(line)
    return passed


def pytest_terminal_summary(terminalreporter):
    if not CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(CRITERIA):
        terminalreporter.write_line(CRITERIA[number])


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def three_state():
    """pi = (0.5, 0.3, 0.2) with an explicit asymmetric kernel."""
    q = np.array([[0.5, 0.2, 0.3],
                  [0.3, 0.6, 0.3],
                  [0.2, 0.2, 0.4]])
    return FiniteInstance([0.5, 0.3, 0.2], q)
