import os
import pathlib

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from econlq.system import LtiSystem, StageCost

FIXTURES = pathlib.Path(__file__).resolve().parent.parent / "fixtures"

settings.register_profile(
    "default",
    max_examples=60,
    derandomize=True,
    deadline=None,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))

_ACCEPTANCE = []


def record_acceptance(line):
    """Remember one acceptance verdict for the terminal summary."""
    print(line)
    _ACCEPTANCE.append(line)


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in _ACCEPTANCE:
            terminalreporter.write_line(line)


@pytest.fixture
def fixture_path():
    def get(name):
        return str(FIXTURES / name)

    return get


def _shared_B_problem(A):
    sys = LtiSystem(np.array(A, dtype=float), np.array([[2.0, 0.0], [1.0, 1.0]]))
    cost = StageCost(np.diag([0.0, 1.0]), np.zeros((2, 2)), np.zeros((2, 2)))
    return sys, cost


@pytest.fixture
def bg_nonzero():
    """Unstable plant whose CGDARE solution leaves B G != 0."""
    return _shared_B_problem([[2.0, 1.0], [0.0, 1.0]])


@pytest.fixture
def destabilizing_inputs():
    """Stable CGDARE closed loop that some optimal inputs destabilize."""
    return _shared_B_problem([[0.9, 1.0], [0.0, 1.0]])


@pytest.fixture
def double_integrator():
    """Marginally unstable plant that needs pre-stabilization."""
    return _shared_B_problem([[1.0, 1.0], [0.0, 1.0]])


@pytest.fixture
def rng():
    return np.random.default_rng(20261017)
