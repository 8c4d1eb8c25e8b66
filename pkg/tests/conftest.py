import os
from pathlib import Path

import pytest
from hypothesis import HealthCheck, settings

from qutrit_pareto.pulses import reference_sech3

settings.register_profile(
    "default", deadline=None, max_examples=40, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))

DATA = Path(__file__).parent / "data"


@pytest.fixture(scope="session")
def sech3_50():
    return reference_sech3(50.0)


@pytest.fixture(scope="session")
def sech3_200():
    return reference_sech3(200.0)
