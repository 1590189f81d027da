import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from akstab import checks
from akstab.elliptic import kernel_detect
from akstab.grid import GridSpec
from akstab.structures import path_evaluate, standard_structure

settings.register_profile(
    "akstab", max_examples=15, deadline=None,
    suppress_health_check=[HealthCheck.too_slow, HealthCheck.function_scoped_fixture])
settings.load_profile("akstab")


@pytest.fixture(scope="session")
def grid8():
    return GridSpec(8)


@pytest.fixture(scope="session")
def flat8(grid8):
    return standard_structure(grid8)


@pytest.fixture(scope="session")
def bump8(grid8):
    """The non-integrable bump 0.3 sin(x3)(e1e1 - e2e2) at t = 0.5."""
    return path_evaluate(checks.bump_path(checks.KEEP_BUMP, 0.5), 0.5, grid8)


@pytest.fixture(scope="session")
def flat_ctx8(flat8):
    return kernel_detect(flat8)


@pytest.fixture(scope="session")
def bump_ctx8(bump8):
    return kernel_detect(bump8)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def grid16():
    return GridSpec(16)


@pytest.fixture(scope="session")
def flat16(grid16):
    return standard_structure(grid16)


@pytest.fixture(scope="session")
def flat_ctx16(flat16):
    return kernel_detect(flat16)


@pytest.fixture(scope="session")
def bump_ctx16(grid16):
    return kernel_detect(path_evaluate(checks.bump_path(checks.KEEP_BUMP, 0.5), 0.5, grid16))
