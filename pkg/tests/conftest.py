import numpy as np
import pytest
from hypothesis import settings

settings.register_profile("default", deadline=None, max_examples=50)
settings.load_profile("default")


@pytest.fixture
def rng():
    from evd.core import make_rng

    return make_rng(12345)


def within_se(samples, target, k=3.0):
    samples = np.asarray(samples, dtype=float)
    se = samples.std(ddof=1) / np.sqrt(len(samples))
    return abs(samples.mean() - target) <= k * se



CRITERIA = pytest.StashKey[list]()


def pytest_configure(config):
    config.stash[CRITERIA] = []


@pytest.fixture
def report_criterion(request):
    """Record one acceptance line; printed in the terminal summary."""

    def record(number, passed, detail):
        request.config.stash[CRITERIA].append((number, passed, detail))

    return record


def pytest_terminal_summary(terminalreporter, config):
    lines = config.stash[CRITERIA]
    if not lines:
        return
    terminalreporter.section("acceptance criteria")
    for number, passed, detail in sorted(lines):
        terminalreporter.write_line(f"criterion {number}: {'PASS' if passed else 'FAIL'}  {detail}")
