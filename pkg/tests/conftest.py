import numpy as np
import pytest

from cmcloops.construct import assemble_family, default_params
from cmcloops.curve import build_curve

GENUS1 = [0.25]
GENUS2 = [0.3 + 0.2j, -0.4]


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)


@pytest.fixture(scope="session")
def genus1():
    return assemble_family(default_params(build_curve(GENUS1)))


@pytest.fixture(scope="session")
def genus2():
    return assemble_family(default_params(build_curve(GENUS2)))
