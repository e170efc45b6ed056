import warnings

import pytest
from hypothesis import HealthCheck, settings

from truncoag import kernels

settings.register_profile("default", deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


@pytest.fixture(autouse=True)
def _quiet_assumption_warnings():
    # c1 <= 2 at beta = 0 is expected for most fixtures
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", kernels.AssumptionWarning)
        yield
