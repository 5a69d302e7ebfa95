import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from contamreg.contrast import ContrastContext
from contamreg.distributions import Gaussian
from contamreg.model import Vartheta, simulate

settings.register_profile("default", deadline=None, max_examples=40,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

M1_TRUTH = Vartheta(0.7, 0.0, 1.0)
STD = Gaussian(0.0, 1.0)


def m1_sample(n, seed, design_mean=2.0):
    return simulate(n, M1_TRUTH, STD, STD, Gaussian(design_mean, 9.0), seed)


def m1_context(n, seed, design_mean=2.0, **kw):
    return ContrastContext.build(m1_sample(n, seed, design_mean), STD, Gaussian(0.0, 16.0), seed, **kw)


@pytest.fixture(scope="session")
def ctx200():
    return m1_context(200, 2024)


@pytest.fixture(scope="session")
def rng():
    return np.random.default_rng(12345)
