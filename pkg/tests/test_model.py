import math

import pytest

from map_delta.model import (
    NO_MARK,
    SOLID_WHITE,
    EgoPose,
    ElementKind,
    LaneMarkType,
    LaneType,
    MarkColor,
    MarkType,
    MapScene,
    with_change_tags,
)
from tests.builders import crossing, lane, road, scene


def test_mark_type_coerces_strings():
    m = LaneMarkType("double-dashed", "yellow")
    assert m.mark is MarkType.DOUBLE_DASHED
    assert m.color is MarkColor.YELLOW
    assert str(m) == "double-dashed/yellow"
    assert m == LaneMarkType(MarkType.DOUBLE_DASHED, MarkColor.YELLOW)

    with pytest.raises(ValueError):
        LaneMarkType("zigzag", "white")


def test_mark_type_is_implicit():
    assert NO_MARK.is_implicit
    assert not SOLID_WHITE.is_implicit
    assert not LaneMarkType("unknown", "white").is_implicit


def test_lane_segment_normalizes_links():
    ls = lane(1, successors=(5, 3, 5), predecessors=[2], lane_type="bus")
    assert ls.successors == (3, 5)
    assert ls.predecessors == (2,)
    assert ls.lane_type is LaneType.BUS
    assert ls.kind is ElementKind.LANE_SEGMENT
    assert list(ls.references()) == [("successors", 3), ("successors", 5), ("predecessors", 2)]


def test_lane_segment_sides():
    ls = lane(1, left_neighbor_id=2)
    assert ls.mark("left") == ls.left_lane_mark_type
    assert ls.mark("right") == SOLID_WHITE
    assert ls.neighbor("left") == 2
    assert ls.neighbor("right") is None


def test_with_geometry_keeps_attributes():
    ls = lane(1, successors=(2,))
    moved = ls.with_geometry(ls.geometry.translated(0.0, 1.0))
    assert moved.successors == (2,)
    assert moved.right_lane_boundary.points[0] == (0.0, 1.0)
    assert moved.centerline.points[0] == (0.0, 2.75)


def test_with_change_tags():
    pc = crossing(100)
    tagged = with_change_tags(pc, ["geometry", "marking"])
    tagged = with_change_tags(tagged, ["geometry", "insertion"])
    assert tagged.change_hist == ("geometry", "marking", "insertion")
    assert tagged.is_modified
    assert not with_change_tags(pc, []).is_modified


def test_scene_access(road_scene: MapScene):
    assert len(road_scene) == 7
    assert 100 in road_scene
    assert 7 not in road_scene
    assert road_scene.get(7) is None
    assert road_scene[100].kind is ElementKind.PEDESTRIAN_CROSSING
    with pytest.raises(KeyError):
        road_scene[7]

    assert [e.id for e in road_scene.elements()] == [1, 2, 3, 4, 5, 6, 100]
    assert road_scene.ids() == {1, 2, 3, 4, 5, 6, 100}
    assert road_scene.next_id() == 101
    assert MapScene().next_id() == 1


def test_scene_iteration_order_is_independent_of_assembly():
    a = scene(lane(3), lane(1), crossing(2))
    b = scene(crossing(2), lane(1), lane(3))
    assert list(a.lane_segments) == list(b.lane_segments) == [1, 3]
    assert a.elements() == b.elements()


def test_without_change_status():
    s = road().with_elements(with_change_tags(e, ["geometry"]) for e in road().elements())
    assert all(e.is_modified for e in s.elements())

    clean = s.without_change_status()
    assert clean.scene_id == "road"
    assert not any(e.is_modified or e.change_hist for e in clean.elements())


@pytest.mark.parametrize("x, y, heading", [(math.nan, 0.0, 0.0), (0.0, math.inf, 0.0), (0.0, 0.0, -math.inf)])
def test_ego_pose_rejects_non_finite(x, y, heading):
    with pytest.raises(ValueError):
        EgoPose(0, x, y, heading)
