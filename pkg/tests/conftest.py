import pytest

from tests.builders import pose, road


@pytest.fixture
def road_scene():
    return road()


@pytest.fixture
def trajectory():
    """Ego driving down the middle of the road."""
    return [pose(x, 3.5, 0.0, t=k) for k, x in enumerate(range(0, 61, 10))]
