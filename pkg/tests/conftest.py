import math

import numpy as np
import pytest

from rcpsim import distributions as dist
from rcpsim.rcps import TwoLevelPolar, degenerate_pair

UNIFORM_PHASE = dist.Uniform(-math.pi, math.pi)


@pytest.fixture
def rng():
    return np.random.default_rng(20240917)


@pytest.fixture
def pair():
    return degenerate_pair()


def euler_state_spec(theta: float, phi: float = 0.0) -> TwoLevelPolar:
    return TwoLevelPolar(dist.Constant(math.cos(theta / 2)), dist.Constant(phi))


# criterion number -> (title, passed); filled by tests/test_acceptance.py
ACCEPTANCE_RESULTS: dict[int, tuple[str, bool]] = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(ACCEPTANCE_RESULTS):
        title, passed = ACCEPTANCE_RESULTS[number]
        terminalreporter.write_line(f"criterion {number:2d} {'PASS' if passed else 'FAIL'}  {title}")
