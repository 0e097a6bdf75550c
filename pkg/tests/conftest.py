import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from dipolegap.potentials import ChargeDistribution, PhysicalParams

settings.register_profile(
    "default", deadline=None, max_examples=40, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("default")


@pytest.fixture
def unit_params():
    return PhysicalParams(gamma=0.5, mass=1.0, x0=(1.0, 0.0))


def dipole_pair(s=1.0):
    pos = np.array([[1.0, 0, 0], [-1.0, 0, 0]])
    return ChargeDistribution(pos, s * np.array([1.0, -1.0]), support_radius=1.0)


def quadrupole_triple(s=1.0):
    pos = np.array([[1.0, 0, 0], [-1.0, 0, 0], [0, 0, 0]])
    return ChargeDistribution(pos, s * np.array([1.0, 1.0, -2.0]), support_radius=1.0)
