import numpy as np
import pytest

from satrisk.instances import load_fixture, random_instance

ACCEPTANCE_LINES = []


@pytest.fixture
def ref1():
    return load_fixture("ref1")


@pytest.fixture
def ref2():
    return load_fixture("ref2")


def small_instances(n=100, seed=2024, **kw):
    rng = np.random.default_rng(seed)
    return [random_instance(rng, **kw) for _ in range(n)]


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
