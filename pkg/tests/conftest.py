import numpy as np
import pytest

from mmjsq import MmJsqModel, load_bundled, validate_generator


def cyclic_chain(m=3, rate=0.1):
    """m-state cycle 0 -> 1 -> ... -> 0, every transition at the same rate."""
    alpha = np.zeros((m, m))
    for i in range(m):
        alpha[i, (i + 1) % m] = rate
    return validate_generator(alpha)


@pytest.fixture(scope="session")
def ssc_setting():
    """Bundled 3-server scenario whose balancing condition holds (load 0.95)."""
    return load_bundled("jsq3_ssc")


@pytest.fixture(scope="session")
def nossc_setting():
    """Bundled 3-server scenario whose balancing condition fails below load 1."""
    return load_bundled("jsq3_nossc")


@pytest.fixture(scope="session")
def mm1_setting():
    return load_bundled("mm1")


@pytest.fixture(scope="session")
def two_state_single_server():
    """m=2, n=1 regression model with hand-solved constants.

    Symmetric unit-rate modulation, service rates (1, 3), arrivals scaled to
    load 1 give h = (-1, 1), V_h = (-1/2, 1/2), k = (1/2, 1/2), k* = 1/2 and
    limiting mean 1 + (1/2)/2 = 5/4.
    """
    chain = validate_generator([[0.0, 1.0], [1.0, 0.0]])
    return MmJsqModel(chain, 1, np.array([1.0, 1.0]), np.array([[1.0], [3.0]]))
