import os

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from inhomfield.profile import VarianceProfile

settings.register_profile("default", max_examples=40, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))


@pytest.fixture
def two_speed():
    return VarianceProfile.two_speed()


@pytest.fixture
def flat():
    return VarianceProfile.constant()


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# one line per acceptance criterion, echoed again in the terminal summary
CRITERIA: dict = {}


def record_criterion(num: int, passed: bool, detail: str) -> str:
    line = f"CRITERION {num:>2}: {'PASS' if passed else 'FAIL'}  {detail}"
    CRITERIA[num] = line
    print(line)
    return line


def pytest_terminal_summary(terminalreporter):
    if CRITERIA:
        terminalreporter.section("acceptance criteria")
        for k in sorted(CRITERIA):
            terminalreporter.write_line(CRITERIA[k])
