import numpy as np
import pytest

from tests.factories import grid_net, paraboloid_net, saddle_net


@pytest.fixture
def rng():
    return np.random.default_rng(20240501)


@pytest.fixture
def planar_grid():
    return grid_net(5, 5)


@pytest.fixture
def paraboloid():
    return paraboloid_net(5, 5)


@pytest.fixture
def saddle():
    return saddle_net(5, 5)
