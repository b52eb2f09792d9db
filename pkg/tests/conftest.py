import os
import sys

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

sys.path.insert(0, os.path.dirname(__file__))

from selfdistill.spectral import ProblemInstance, make_synthetic  # noqa: E402

settings.register_profile("default", max_examples=60, deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.register_profile("thorough", max_examples=500, deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))


@pytest.fixture
def rank4():
    """Rank-4 instance with s = (1, 1/2, 1/3, 1/4), theta* = u_1, gamma = 0.125, d = n = 4."""
    return make_synthetic(4, 4, [1, 1 / 2, 1 / 3, 1 / 4], "u1", 0.125, 4, identity_bases=True)


def random_instance(rng, d_max=8, r_max=6, n_max=10) -> ProblemInstance:
    d = int(rng.integers(2, d_max + 1))
    n = int(rng.integers(2, n_max + 1))
    r = int(rng.integers(1, min(d, n, r_max) + 1))
    x = rng.standard_normal((d, r)) @ rng.standard_normal((r, n))
    return ProblemInstance(x, rng.standard_normal(d), float(rng.uniform(0.05, 1.0)) ** 2)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


ACCEPTANCE_LINES: dict[int, str] = {}


def record_criterion(number: int, ok: bool, detail: str) -> None:
    """Remember one acceptance line for the summary, print it, and fail on a miss."""
    line = f"criterion {number:2d}: {'PASS' if ok else 'FAIL'}  {detail}"
    ACCEPTANCE_LINES[number] = line
    print(line)
    assert ok, line


def skip_criterion(number: int, reason: str) -> None:
    line = f"criterion {number:2d}: SKIP  {reason}"
    ACCEPTANCE_LINES[number] = line
    print(line)
    pytest.skip(reason)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for number in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(ACCEPTANCE_LINES[number])
