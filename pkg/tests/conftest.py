import sys
from pathlib import Path

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

sys.path.insert(0, str(Path(__file__).parent))

from energyplan.geometry import BoundaryConditions, PolygonEnvironment  # noqa: E402

settings.register_profile("repo", deadline=None, max_examples=60,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("repo")

UNIT_SQUARE = [(-0.5, -0.5), (0.5, -0.5), (0.5, 0.5), (-0.5, 0.5)]


@pytest.fixture
def square():
    return PolygonEnvironment.from_rings([UNIT_SQUARE])


@pytest.fixture
def square_bc():
    return BoundaryConditions(p0=(-2.0, 0.0), pf=(2.0, 0.0), tf=4.0)


@pytest.fixture
def l_shape():
    # hexagon with one reflex corner at (1, 1)
    return PolygonEnvironment.from_rings([[(0, 0), (2, 0), (2, 1), (1, 1), (1, 2), (0, 2)]])


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
