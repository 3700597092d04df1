import numpy as np
import pytest

from graphon_sis.config import TestingConfig
from graphon_sis.models import DiscreteBlock, EpidemicParams, IntegratorConfig, Partition, PowerLaw
from graphon_sis.services import KernelService

# keeps explicit RK45 steps practical on power-law meshes
PHI_CAP = 1e3

FIVE_BLOCK = [
    [2.0, 1.0, 0.5, 0.2, 0.1],
    [1.0, 1.5, 0.8, 0.3, 0.2],
    [0.5, 0.8, 1.2, 0.6, 0.3],
    [0.2, 0.3, 0.6, 1.0, 0.7],
    [0.1, 0.2, 0.3, 0.7, 0.9],
]


def logistic(t, u0, rate=1.0, capacity=1.0):
    """Solution of u' = rate u (1 - u / capacity) with u(0) = u0."""
    t = np.asarray(t, dtype=float)
    return capacity / (1.0 + (capacity / u0 - 1.0) * np.exp(-rate * t))


@pytest.fixture
def settings():
    return TestingConfig


@pytest.fixture
def hmfa():
    return KernelService.constant(1.0)


@pytest.fixture
def two_block():
    # eigenvalues 2 and 1
    return DiscreteBlock(np.array([[3.0, 1.0], [1.0, 3.0]]), Partition.uniform(2))


@pytest.fixture
def five_block():
    return DiscreteBlock(np.array(FIVE_BLOCK), Partition.uniform(5))


@pytest.fixture
def power_law():
    return PowerLaw.create(1.0, 0.4, grid_size=300, phi_cap=PHI_CAP)


@pytest.fixture
def power_law_03():
    return PowerLaw.create(1.0, 0.3, grid_size=300, phi_cap=PHI_CAP)


@pytest.fixture(scope='session')
def power_law_fine():
    """PowerLaw(1, 0.4) on the full 2000-cell mesh."""
    return PowerLaw.create(1.0, 0.4, grid_size=2000, phi_cap=PHI_CAP)


@pytest.fixture(scope='session')
def power_law_03_fine():
    return PowerLaw.create(1.0, 0.3, grid_size=2000, phi_cap=PHI_CAP)


@pytest.fixture
def si_params():
    return EpidemicParams(1.0, 0.0)


@pytest.fixture
def cfg():
    return IntegratorConfig()


@pytest.fixture
def tight_cfg():
    return IntegratorConfig(rel_tol=1e-10, abs_tol=1e-12)
