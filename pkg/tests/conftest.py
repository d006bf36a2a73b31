import numpy as np
import pytest

from kerneldr import ShiftInvariantKernel
from kerneldr.cli import generate_dataset

GAUSS = ShiftInvariantKernel.gaussian(0.5)
LAP = ShiftInvariantKernel.laplacian(0.5)
CAUCHY = ShiftInvariantKernel.cauchy(1.0)
ALL_KERNELS = [GAUSS, LAP, CAUCHY]


@pytest.fixture(scope="session")
def fig1_data():
    """The n=100, d=60 standard-normal dataset (generator seed 1)."""
    return generate_dataset(100, 60, 1)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def within_se(estimate, target, se, k=4.0):
    return abs(estimate - target) <= k * se


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
