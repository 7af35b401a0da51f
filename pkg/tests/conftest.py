from pathlib import Path

import numpy as np
import pytest
from hypothesis import settings

from blocktau.loops import BlockLoop, CircleGrid

settings.register_profile("default", max_examples=25, deadline=None)
settings.load_profile("default")

SCENARIOS = Path(__file__).resolve().parents[1] / "src" / "blocktau" / "scenarios"

# filled by tests/test_acceptance.py, printed in the terminal summary
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture
def grid():
    return CircleGrid(256)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def two_by_two_gamma() -> BlockLoop:
    C = np.array([[0.0, 0.2], [0.1, 0.0]])
    return BlockLoop.from_dict({0: np.eye(2), -1: C})
