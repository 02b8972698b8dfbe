import numpy as np
import pytest

from echocast.lorenz96 import Lorenz96Config, simulate


@pytest.fixture(scope="session")
def lorenz_small():
    """Two short benchmark realizations for fast integration tests."""
    return simulate(Lorenz96Config(seed=0), 300, 2)


@pytest.fixture(scope="session")
def rng():
    return np.random.default_rng(12345)
