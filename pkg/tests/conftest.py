import numpy as np
import pytest

from harnesslab import _backend
from harnesslab.kernel import KernelAnalysis, KernelSpec, lazy_kernel
from harnesslab.noise import NoiseModel

BACKENDS = sorted(_backend.BACKENDS)

LAZY = {0: 0.5, 1: 0.5}
THREE_POINT = {0: 0.5, 1: 0.25, 2: 0.25}
CENTERED = {-1: 1 / 3, 0: 1 / 3, 1: 1 / 3}
SKEW = {-1: 0.2, 0: 0.3, 2: 0.5}


def analysis_of(table):
    return KernelAnalysis(KernelSpec.from_table(table))


@pytest.fixture(scope="session")
def lazy():
    return KernelAnalysis(lazy_kernel())


@pytest.fixture(scope="session")
def three_point():
    return analysis_of(THREE_POINT)


@pytest.fixture(scope="session")
def centered():
    return analysis_of(CENTERED)


@pytest.fixture(scope="session")
def skew():
    return analysis_of(SKEW)


@pytest.fixture(scope="session")
def plane():
    return KernelAnalysis(KernelSpec.from_table({(0, 0): 1 / 3, (1, 0): 1 / 3, (0, 1): 1 / 3}))


@pytest.fixture
def gauss():
    return NoiseModel("gaussian", 1.0)


def within(est, target, se, k=3.0):
    return abs(est - target) <= k * se


def rel(a, b):
    a, b = np.asarray(a, float), np.asarray(b, float)
    return float(np.max(np.abs(a - b) / np.maximum(1.0, np.abs(b))))


# acceptance reporting ------------------------------------------------------

ACCEPTANCE = []


def report(number, passed, detail, seconds=None, budget=None):
    """Record and print one acceptance line; returns ``passed``."""
    timing = "" if seconds is None else f" [{seconds:.1f} s, budget {budget}]"
    line = f"criterion {number:2d}: {'PASS' if passed else 'FAIL'}  {detail}{timing}"
    ACCEPTANCE.append((number, line))
    print(line)
    return passed


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(ACCEPTANCE):
            terminalreporter.write_line(line)
