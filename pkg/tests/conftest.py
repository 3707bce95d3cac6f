import os
import sys

import numpy as np
import pytest
from hypothesis import settings

sys.path.insert(0, os.path.dirname(__file__))

settings.register_profile("default", deadline=None, max_examples=60)
settings.load_profile("default")

from copselect.cop import COPInstance, Constraint, ConstraintKind, Objective, SearchSpace  # noqa: E402


def linear(lin, offset=0.0):
    return Constraint(ConstraintKind.LINEAR, [0.0] * len(lin), lin, offset)


def make_instance(objective="sphere", constraints=(), d=None, low=-5.0, high=5.0, id="t"):
    if d is None:
        d = len(constraints[0].lin) if constraints else 5
    return COPInstance(id, Objective(objective), tuple(constraints), SearchSpace.cube(d, low, high))


@pytest.fixture
def sphere5():
    return make_instance("sphere", d=5)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    if mod is None or not mod.VERDICTS:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(mod.VERDICTS):
        terminalreporter.write_line(mod.VERDICTS[n])
