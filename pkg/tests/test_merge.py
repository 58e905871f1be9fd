import itertools
from dataclasses import replace

import pytest

from map_delta.errors import GeometryError, SchemaError
from map_delta.merge import (
    MergePolicy,
    concatenate,
    merge_elements,
    merge_pair,
    mergeable_pairs,
    unify_crossing_orientation,
)
from map_delta.model import with_change_tags
from map_delta.utils import Polyline2D, aligned_ring, signed_area
from map_delta.validate import validate_scene
from tests.builders import DASHED_WHITE, crossing, lane, road, scene


def _with(s, *elements):
    replaced = {e.id: e for e in elements}
    return s.with_elements(replaced.get(e.id, e) for e in s.elements())


def test_mergeable_pairs(road_scene):
    assert mergeable_pairs(road_scene) == [(1, 2), (2, 3), (4, 5), (5, 6)]


def test_merge_elements(road_scene):
    merged = merge_elements(road_scene)

    assert merged.ids() == {1, 4, 100}
    right = merged[1]
    assert len(right.centerline) == 13
    assert right.centerline.points[0] == (0.0, 1.75)
    assert right.centerline.points[-1] == (60.0, 1.75)
    assert right.successors == right.predecessors == ()
    assert right.left_neighbor_id == 4
    assert merged[4].right_neighbor_id == 1
    assert validate_scene(merged).ok
    assert mergeable_pairs(merged) == []


@pytest.mark.parametrize(
    "edit, policy, expected",
    [
        (lambda s: replace(s[2], right_lane_mark_type=DASHED_WHITE), MergePolicy(), {1, 2, 3, 4, 100}),
        (lambda s: replace(s[2], right_lane_mark_type=DASHED_WHITE), MergePolicy(same_marks=False), {1, 4, 100}),
        (lambda s: replace(s[3], lane_type="bus"), MergePolicy(), {1, 3, 4, 100}),
        (lambda s: replace(s[3], lane_type="bus"), MergePolicy(same_lane_type=False), {1, 4, 100}),
        (lambda s: with_change_tags(s[1], ["geometry"]), MergePolicy(), {1, 2, 4, 100}),
        (lambda s: with_change_tags(s[1], ["geometry"]), MergePolicy(same_change_status=False), {1, 4, 100}),
    ],
)
def test_merge_policy(road_scene, edit, policy, expected):
    assert merge_elements(_with(road_scene, edit(road_scene)), policy).ids() == expected


def test_merge_order_does_not_matter(road_scene):
    expected = merge_elements(road_scene)
    for order in itertools.permutations(mergeable_pairs(road_scene)):
        s, absorbed_by = road_scene, {}
        for a, b in order:
            while a in absorbed_by:
                a = absorbed_by[a]
            s = merge_pair(s, a, b)
            absorbed_by[b] = a
        assert s == expected, order


def _total_length(s, name):
    return sum(getattr(ls, name).length for ls in s.lane_segments.values())


def _crossing_areas(s):
    return {pc.id: abs(signed_area(aligned_ring(pc.left_lane_boundary, pc.right_lane_boundary))) for pc in s.pedestrian_crossings.values()}


@pytest.mark.parametrize("length", [1, 2, 4, 6])
def test_merge_preserves_length_and_area(length):
    s = road(length=length)
    reversed_crossing = replace(s[100], right_lane_boundary=s[100].right_lane_boundary.reversed())
    s = _with(s, reversed_crossing)

    merged = unify_crossing_orientation(merge_elements(s))
    assert len(merged.lane_segments) == 2
    for name in ("left_lane_boundary", "right_lane_boundary", "centerline"):
        assert _total_length(merged, name) == pytest.approx(_total_length(s, name))
    assert _crossing_areas(merged) == pytest.approx(_crossing_areas(s))
    assert _crossing_areas(merged)[100] == pytest.approx(3.0 * 7.0)


def test_forks_are_not_merged():
    s = scene(
        lane(1, successors=(2, 3)),
        lane(2, 20, 40, predecessors=(1,)),
        lane(3, 20, 40, 10, predecessors=(1,), successors=(4,)),
        lane(4, 40, 60, 10, predecessors=(3,)),
    )
    assert mergeable_pairs(s) == [(3, 4)]
    assert merge_elements(s).ids() == {1, 2, 3}


def test_merge_pair_needs_a_chain(road_scene):
    with pytest.raises(ValueError):
        merge_pair(road_scene, 1, 3)


def test_policy_dict():
    policy = MergePolicy.from_dict({"same_marks": False})
    assert not policy.same_marks
    assert MergePolicy.from_dict(policy.to_dict()) == policy
    with pytest.raises(SchemaError):
        MergePolicy.from_dict({"same_colour": True})


def test_concatenate():
    p = Polyline2D(((0, 0), (1, 0)))
    assert concatenate(p, Polyline2D(((1, 0), (2, 0)))).points == ((0.0, 0.0), (1.0, 0.0), (2.0, 0.0))
    assert len(concatenate(p, Polyline2D(((1, 1), (2, 1))))) == 4


@pytest.mark.parametrize(
    "make",
    [
        lambda pc: pc,
        # clockwise
        lambda pc: replace(pc, left_lane_boundary=pc.right_lane_boundary, right_lane_boundary=pc.left_lane_boundary),
        lambda pc: replace(pc, right_lane_boundary=pc.right_lane_boundary.reversed()),
        lambda pc: replace(pc, centerline=pc.centerline.reversed()),
    ],
)
def test_unify_crossing_orientation(make):
    pc = crossing(100)
    s = scene(make(pc), lane(1))

    unified = unify_crossing_orientation(s)
    assert unified[100] == pc
    assert unified[1] == s[1]
    assert validate_scene(unified, orientation_unified=True).ok
    assert unify_crossing_orientation(unified) == unified


def test_unify_rejects_self_intersecting_crossing():
    pc = replace(crossing(100), right_lane_boundary=Polyline2D(((31.5, 0.0), (25.0, 3.5), (31.5, 7.0))))
    with pytest.raises(GeometryError):
        unify_crossing_orientation(scene(pc))
