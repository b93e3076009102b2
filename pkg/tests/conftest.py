import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from fluxtune.ftr import CpwParams, FtrParams
from fluxtune.squid import SquidParams

settings.register_profile(
    "default", deadline=None, max_examples=40, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("default")

# Device columns used across tests (lengths in m, inductances in H).
CPW_200 = dict(L_r=881.2e-12, C_r=354.2e-15, length=3259e-6)
CPW_100 = dict(L_r=930.1e-12, C_r=373.9e-15, length=3440e-6)
CPW_10 = dict(L_r=897.7e-12, C_r=360.9e-15, length=3320e-6)


@pytest.fixture
def cpw200():
    return CpwParams.from_modal(**CPW_200)


@pytest.fixture
def squid200():
    return SquidParams(400e-9, 0.33, 697e-12)


@pytest.fixture
def ftr200(cpw200, squid200):
    return FtrParams(cpw200, squid200, 1.0)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
