import sys

import numpy as np
import pytest

from clqg.lattice import Rectangle, discretize


@pytest.fixture
def unit_square():
    return Rectangle(0.0, 0.0, 1.0, 1.0)


@pytest.fixture
def small_box(unit_square):
    # 16 x 16 sites, (2..17)^2
    return discretize(unit_square, 19)


@pytest.fixture
def rng():
    return np.random.default_rng(20240917)



def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    lines = getattr(mod, "LINES", [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(lines):
            terminalreporter.write_line(line)
