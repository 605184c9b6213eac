import numpy as np
import pytest

from dmftlab.kernels import CovarianceKernel, pure_noise

H_TEST = [
    CovarianceKernel([0, 0.3, 0.5]),
    CovarianceKernel([0, 0.1, 0.5]),
    CovarianceKernel([0, 0.9, 0, 1 / 6]),
    CovarianceKernel([0, 0, 0, 1 / 6]),
    CovarianceKernel([0, 0.2, 0.1, 0.05, 0.3]),
]


@pytest.fixture
def h_quad():
    return CovarianceKernel([0, 0.3, 0.5])


@pytest.fixture
def noise1():
    return pure_noise(1.0)


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
