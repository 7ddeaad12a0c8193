import os

import pytest
from hypothesis import HealthCheck, settings

from hklab import geometry
from hklab.kernel import KernelModel

settings.register_profile("default", max_examples=60, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))

CONFIGS = os.path.join(os.path.dirname(__file__), "..", "configs")


@pytest.fixture(scope="session")
def disc():
    return geometry.ball()


@pytest.fixture(scope="session")
def square():
    return geometry.box()


@pytest.fixture(scope="session")
def case_i():
    return KernelModel.power(1.0, 0.4, 0.6)


@pytest.fixture(scope="session")
def case_ii():
    return KernelModel.power(1.0, 0.2, 1.8)
