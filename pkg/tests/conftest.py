import numpy as np
import pytest

from pilotwave.core import Grid3, PhysicalParams


@pytest.fixture
def params_unit():
    return PhysicalParams(light_speed=1.0)


@pytest.fixture
def box_grid():
    return Grid3(points=(16, 16, 16), extents=(1.0, 1.0, 1.0), boundary="dirichlet")


@pytest.fixture
def periodic_grid():
    return Grid3(points=(16, 16, 16), extents=(1.0, 1.0, 1.0), boundary="periodic")


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)
