import os

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile(
    "default", max_examples=60, deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))

HERE = os.path.dirname(__file__)
CONFIGS = os.path.join(os.path.dirname(HERE), "configs")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
