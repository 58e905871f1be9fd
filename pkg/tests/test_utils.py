import math

import numpy as np
import pytest

from map_delta.errors import GeometryError
from map_delta.utils import (
    Polyline2D,
    aligned_ring,
    boundaries_opposed,
    boundary_ring,
    clip_to_square,
    ego_to_world,
    heading_change_deg,
    lateral_offsets,
    max_deviation,
    midline,
    resample_polyline,
    signed_area,
    world_to_ego,
)
from tests.builders import straight


@pytest.mark.parametrize(
    "points",
    [
        ((0.0, 0.0),),
        ((0.0, 0.0), (0.0, 0.0)),
        ((0.0, 0.0), (1.0, 0.0), (1.0, 0.0)),
        ((0.0, 0.0), (math.nan, 1.0)),
    ],
)
def test_polyline_rejects_degenerate_points(points):
    with pytest.raises(GeometryError):
        Polyline2D(points)


def test_polyline_basics():
    p = Polyline2D(((0, 0), (3, 4), (3, 10)))
    assert p.points == ((0.0, 0.0), (3.0, 4.0), (3.0, 10.0))
    assert len(p) == 3
    assert p.length == pytest.approx(11.0)
    assert p.reversed().points[0] == (3.0, 10.0)
    assert np.allclose(p.translated(1, -1).xy[0], [1, -1])


@pytest.mark.parametrize("n", [3, 5, 10, 17])
def test_resample_polyline(n):
    p = Polyline2D(((0, 0), (4, 0), (4, 4)))
    q = resample_polyline(p, n)

    assert len(q) == n
    assert q.points[0] == p.points[0]
    assert q.points[-1] == p.points[-1]
    steps = np.linalg.norm(np.diff(q.xy, axis=0), axis=1)
    # uniform spacing along the arc, except where a step cuts the corner
    assert q.length <= p.length + 1e-12
    assert np.max(steps) == pytest.approx(p.length / (n - 1))


def test_resample_polyline_needs_two_points():
    with pytest.raises(ValueError):
        resample_polyline(straight(0, 1, 0), 1)


def test_max_deviation_and_midline():
    a = straight(0, 10, 0, n=3)
    b = straight(0, 10, 2, n=7)
    assert max_deviation(a, b, 10) == pytest.approx(2.0)
    assert np.allclose(midline(a, b, 4).xy[:, 1], 1.0)


def test_signed_area_and_rings():
    left, right = straight(0, 10, 3), straight(0, 10, 0)
    ring = boundary_ring(left, right)
    assert signed_area(ring) == pytest.approx(30.0)
    assert signed_area(boundary_ring(right, left)) == pytest.approx(-30.0)

    assert not boundaries_opposed(left, right)
    assert boundaries_opposed(left, right.reversed())
    assert np.allclose(aligned_ring(left, right.reversed()), ring)


@pytest.mark.parametrize(
    "points, expected",
    [
        (((0, 0), (10, 0), (20, 0)), 0.0),
        (((0, 0), (10, 0), (10, 10)), 90.0),
        (((0, 0), (10, 0), (10, -10)), -90.0),
        (((0, 0), (10, 0), (10, 10), (0, 10)), 180.0),
    ],
)
def test_heading_change_deg(points, expected):
    assert heading_change_deg(Polyline2D(points)) == pytest.approx(expected)


def test_lateral_offsets_sign():
    reference = straight(0, 10, 0)
    assert np.allclose(lateral_offsets(straight(0, 10, 1.5), reference), 1.5)
    assert np.allclose(lateral_offsets(straight(0, 10, -2), reference), -2.0)


def test_ego_frame_roundtrip():
    rng = np.random.default_rng(7)
    for _ in range(20):
        xy = rng.normal(0, 30, (8, 2))
        x, y, theta = rng.normal(0, 100), rng.normal(0, 100), rng.uniform(-math.pi, math.pi)
        assert np.allclose(ego_to_world(world_to_ego(xy, x, y, theta), x, y, theta), xy)


def test_world_to_ego_axes():
    # facing +y: a point ahead of the ego has positive x, a point on its left positive y
    ego = world_to_ego(np.array([[0.0, 5.0], [-5.0, 0.0]]), 0.0, 0.0, math.pi / 2)
    assert np.allclose(ego, [[5.0, 0.0], [0.0, 5.0]])


def test_clip_to_square_inside_is_untouched():
    xy = np.array([[-10.0, 0.0], [10.0, 5.0]])
    assert clip_to_square(xy, 25.0) is xy


@pytest.mark.parametrize(
    "xy, expected_ends",
    [
        ([[-40.0, 0.0], [40.0, 0.0]], [[-25.0, 0.0], [25.0, 0.0]]),
        ([[0.0, 0.0], [0.0, 60.0]], [[0.0, 0.0], [0.0, 25.0]]),
        # leaves the square and comes back: the longer piece wins
        ([[0.0, 0.0], [30.0, 0.0], [30.0, 10.0], [10.0, 10.0]], [[0.0, 0.0], [25.0, 0.0]]),
    ],
)
def test_clip_to_square(xy, expected_ends):
    clipped = clip_to_square(np.array(xy), 25.0)
    ends = sorted(map(tuple, clipped[[0, -1]]))
    assert np.allclose(ends, sorted(map(tuple, expected_ends)))


def test_clip_to_square_outside():
    assert clip_to_square(np.array([[30.0, 30.0], [40.0, 40.0]]), 25.0) is None
    # touching a corner leaves nothing of positive length
    assert clip_to_square(np.array([[25.0, 25.0], [40.0, 40.0]]), 25.0) is None
