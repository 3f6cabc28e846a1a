import math

import pytest

from spdelab.coefficients import CoefficientSchedule, TimeFunction
from spdelab.grid import WeightedGrid, sample_family

SQRT2 = math.sqrt(2.0)


@pytest.fixture(scope="session")
def equality_schedule():
    """f = 1, g = sqrt 2: equality in the admissibility condition at c = 1."""
    return CoefficientSchedule.constant(1.0, SQRT2)


@pytest.fixture(scope="session")
def vp_schedule():
    return CoefficientSchedule(TimeFunction("linear", (0.05, 0.45)),
                               TimeFunction("linear", (0.1, 0.9), squared=True))


@pytest.fixture(scope="session")
def grid513():
    return WeightedGrid.default(1, 513, 1.0)


@pytest.fixture(scope="session")
def grid129():
    return WeightedGrid.default(1, 129, 1.0)


@pytest.fixture(scope="session")
def family50():
    return sample_family(50, 0, 1.0, 1)


# -- acceptance log: one line per criterion, echoed in the terminal summary ---------

_ACCEPTANCE = pytest.StashKey[list]()


@pytest.fixture
def acceptance(request):
    lines = request.config.stash.setdefault(_ACCEPTANCE, [])

    def record(tag: str, ok, text: str) -> None:
        label = "INFO" if ok is None else ("PASS" if ok else "FAIL")
        line = f"{tag:4s} {label}  {text}"
        lines.append(line)
        print(line)

    return record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get(_ACCEPTANCE, None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
