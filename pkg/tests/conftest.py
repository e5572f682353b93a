import pytest

from hurstlab.generators import generate
from hurstlab.process import ProcessSpec, make_grid

ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def unit_grid():
    return make_grid("uniform", 0, 16, 17)


@pytest.fixture(scope="session")
def fbm07(unit_grid):
    return generate(ProcessSpec("fbm", 0.7), unit_grid, 10_000, seed=101)


@pytest.fixture(scope="session")
def markov07(unit_grid):
    return generate(ProcessSpec("markov-exact", 0.7), unit_grid, 10_000, seed=202)
