import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from colldiff.mixture import AtomicPrior, SmoothedTarget
from colldiff.schedule import NoiseSchedule

settings.register_profile("default", max_examples=60, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

ACCEPTANCE_ATOMS = [[2.0, 0.0], [-2.0, 0.0], [0.0, 2.0]]


def make_target(atoms, weights=None, sigma=1.0, T=10.0):
    return SmoothedTarget(AtomicPrior(atoms, weights), sigma, NoiseSchedule(T))


@pytest.fixture
def gmm():
    return make_target(ACCEPTANCE_ATOMS)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
