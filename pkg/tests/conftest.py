import numpy as np
import pytest

from driftlab import make_schedule


@pytest.fixture
def linear():
    return make_schedule("linear")


@pytest.fixture
def gvp():
    return make_schedule("gvp")


@pytest.fixture
def vp():
    return make_schedule("sbdm-vp")


@pytest.fixture
def all_schedules(linear, gvp, vp):
    return [linear, gvp, vp]


@pytest.fixture
def rng():
    return np.random.default_rng(20260816)
