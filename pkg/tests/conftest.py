import pytest

from config import AsymflatConfig, set_config
from metric import MetricSpec


@pytest.fixture(autouse=True)
def default_config():
    """Every test starts from the built-in defaults, whatever the shell exports."""
    config = AsymflatConfig()
    set_config(config)
    yield config
    set_config(AsymflatConfig())


@pytest.fixture
def flat():
    return MetricSpec.flat()


@pytest.fixture
def schwarzschild():
    return MetricSpec.schwarzschild(1.0)


@pytest.fixture
def half_schwarzschild():
    return MetricSpec.half_schwarzschild(1.0)
