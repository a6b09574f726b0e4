import numpy as np
import pytest

from scrapmpc.belief import BeliefState
from scrapmpc.plant import default_params


@pytest.fixture(scope="session")
def params():
    return default_params()


@pytest.fixture(scope="session")
def baseline_belief(params):
    """Belief at the true state with the initial covariance."""
    return BeliefState(x_hat=np.array([0.07, 0.13, 0.17]), p_sqrt=params.p0_sqrt)


@pytest.fixture()
def rng():
    return np.random.default_rng(12345)
