import math

import pytest

from map_delta.patch import crop_patch, to_ego_frame, visible_ids
from tests.builders import lane, pose, scene


def _xs(p):
    return [x for x, _ in p.points]


def test_crop_keeps_inside_elements_untouched(road_scene):
    patch = crop_patch(road_scene, pose(30.0, 3.5), 30.0)

    assert patch.ids() == road_scene.ids()
    assert patch.scene_id == road_scene.scene_id
    assert patch[2] == road_scene[2]
    assert patch[100] == road_scene[100]


def test_crop_clips_at_the_border(road_scene):
    patch = crop_patch(road_scene, pose(30.0, 3.5), 30.0)

    assert _xs(patch[1].right_lane_boundary) == pytest.approx([15.0, 20.0])
    assert _xs(patch[3].centerline) == pytest.approx([40.0, 45.0])
    assert patch[3].centerline.points[0][1] == pytest.approx(1.75)


def test_crop_keeps_lane_straddling_the_border():
    # right boundary at y = 23.5 lies inside the 50 m square, the rest of the lane outside
    s = scene(lane(1, -10.0, 10.0, 23.5, 3.5))
    patch = crop_patch(s, pose(), 50.0)

    assert patch.ids() == {1}
    assert patch[1].right_lane_boundary == s[1].right_lane_boundary
    for p in (patch[1].left_lane_boundary, patch[1].centerline):
        assert _xs(p) == pytest.approx(_xs(s[1].left_lane_boundary))
        assert {y for _, y in p.points} == {25.0}


def test_crop_drops_element_outside():
    s = scene(lane(1, -10.0, 10.0, 30.0))
    assert len(crop_patch(s, pose(), 50.0)) == 0


def test_crop_restricts_connectivity(road_scene):
    patch = crop_patch(road_scene, pose(30.0, 3.5), 10.0)

    assert patch.ids() == {2, 5, 100}
    assert patch[2].successors == ()
    assert patch[2].predecessors == ()
    assert patch[2].left_neighbor_id == 5
    assert patch[5].right_neighbor_id == 2


def test_crop_with_rotated_pose(road_scene):
    # facing +y the square spans x in [25, 35] and y in [-1.5, 8.5]
    patch = crop_patch(road_scene, pose(30.0, 3.5, math.pi / 2), 10.0)

    assert patch.ids() == {2, 5, 100}
    assert sorted(_xs(patch[2].right_lane_boundary)) == pytest.approx([25.0, 30.0, 35.0])


def test_crop_is_idempotent(road_scene):
    p = pose(30.0, 3.5, 0.3)
    once = crop_patch(road_scene, p, 30.0)
    assert crop_patch(once, p, 30.0) == once


def test_crop_in_ego_frame(road_scene):
    patch = crop_patch(road_scene, pose(30.0, 3.5), 10.0, ego_frame=True)
    center = patch[2].centerline

    assert center.points[0] == pytest.approx((-5.0, -1.75))
    assert center.points[-1] == pytest.approx((5.0, -1.75))
    assert patch[100].centerline.points[0] == pytest.approx((0.0, -3.5))


def test_to_ego_frame(road_scene):
    moved = to_ego_frame(road_scene, pose(20.0, 0.0, math.pi))
    # lane 1 ran from x = 0 to 20; behind the ego it now runs from x = 20 to 0
    assert moved[1].right_lane_boundary.points[0] == pytest.approx((20.0, 0.0))
    assert moved[1].right_lane_boundary.points[-1] == pytest.approx((0.0, 0.0), abs=1e-12)
    assert moved.ids() == road_scene.ids()


def test_visible_ids(road_scene):
    assert visible_ids(road_scene, pose(30.0, 3.5), 10.0) == {2, 5, 100}
    assert visible_ids(road_scene, pose(10.0, 1.0), 4.0) == {1}
    assert visible_ids(road_scene, pose(500.0, 0.0)) == set()


@pytest.mark.parametrize("extent", [0.0, -5.0, math.nan])
def test_extent_must_be_positive(road_scene, extent):
    with pytest.raises(ValueError):
        crop_patch(road_scene, pose(), extent)
    with pytest.raises(ValueError):
        visible_ids(road_scene, pose(), extent)
