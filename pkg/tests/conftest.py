import numpy as np
import pytest

from shus.model import ContinuousTarget, Partition, ToyTarget, reference_weights


@pytest.fixture(scope="session")
def toy():
    return ToyTarget(0.1)


@pytest.fixture(scope="session")
def toy_partition():
    return Partition.identity(3)


@pytest.fixture(scope="session")
def plane_theta_star():
    """Quadrature weights of the two-well target at beta = 4, d = 24."""
    return reference_weights(ContinuousTarget(beta=4.0), Partition.uniform(1.2, 24))


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)
