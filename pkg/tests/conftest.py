import numpy as np
import pytest

from qsysid import GaussianDensity, ModelSpec


@pytest.fixture
def model_1q():
    return ModelSpec.one_qubit()


@pytest.fixture
def model_2q():
    return ModelSpec.two_qubit()


@pytest.fixture
def prior_1q():
    return GaussianDensity(np.array([4.1, 6.2]), np.diag([0.25, 0.25]))
