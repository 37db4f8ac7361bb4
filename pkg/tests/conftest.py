import numpy as np
import pytest

from leibniz import models


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)


@pytest.fixture
def table1_density():
    specs = dict(models.TABLE1_CONFIGS)

    def make(name):
        return models.make_density(specs[name])

    return make


_CRITERIA_KEY = pytest.StashKey[list]()


def pytest_configure(config):
    config.stash[_CRITERIA_KEY] = []


@pytest.fixture
def criterion(request):
    """Record one acceptance line; returns a callable ``(number, passed, detail)``."""
    lines = request.config.stash[_CRITERIA_KEY]

    def record(number, passed, detail):
        lines.append((number, f"criterion {number}: {'PASS' if passed else 'FAIL'}  {detail}"))
        return passed

    return record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get(_CRITERIA_KEY, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(lines):
            terminalreporter.write_line(line)
