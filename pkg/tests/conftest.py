import numpy as np
import pytest

from compound_increments.models import ModelSpec


@pytest.fixture(scope="session")
def unit_model():
    return ModelSpec.constant(1.0, d=1, z=0.3)


@pytest.fixture(scope="session")
def standard_gaussian():
    return ModelSpec.gaussian(0.0, 0.0, 1.0, d=1, z=0.5)


@pytest.fixture(scope="session")
def regression_gaussian():
    # Y | Z = z' ~ N(z', 1)
    return ModelSpec.gaussian(0.0, 1.0, 1.0, d=1, z=0.5)


@pytest.fixture(scope="session")
def unit_chern(unit_model):
    return unit_model.chernoff_y


def h1(x):
    if x < 0:
        return np.inf
    if x == 0:
        return 1.0
    return x * np.log(x) - x + 1.0
