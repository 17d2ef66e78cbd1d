import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile("default", max_examples=60, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

# r = 2, a = (1, 1), w = (-2, 2): 2 sinh(2 s) = 2, so s = asinh(1) / 2
S_CLOSED_FORM = 0.5 * np.log(1.0 + np.sqrt(2.0))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
