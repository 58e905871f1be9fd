from dataclasses import replace

import pytest

from map_delta.lane_graph import END, START, build_lane_graph, topological_function, topology_changed, turn_class
from map_delta.utils import Polyline2D
from tests.builders import chained, lane, road, scene


def test_chains(road_scene):
    g = build_lane_graph(road_scene)

    assert g.edges == (1, 2, 3, 4, 5, 6)
    assert len(g.vertices) == 8
    assert sorted(g.degree(v) for v in g.vertices) == [1, 1, 1, 1, 2, 2, 2, 2]
    assert g.junction(1, END) == g.junction(2, START) == ((1, END), (2, START))
    assert g.junction(1, START) == ((1, START),)


def test_fork():
    a, b, c = lane(1, successors=(2, 3)), lane(2, 20, 40, predecessors=(1,)), lane(3, 20, 40, 10, predecessors=(1,))
    g = build_lane_graph(scene(a, b, c))

    assert g.junction(1, END) == ((1, END), (2, START), (3, START))
    assert g.degree(g.junction(1, END)) == 3
    assert g.to_networkx().number_of_edges() == 3


def test_links_outside_the_scene_are_ignored():
    g = build_lane_graph(scene(lane(1, successors=(2,))))
    assert len(g.vertices) == 2


def test_isomorphic_ignores_ids():
    renumbered = scene(*chained(lane(10), lane(20, 20, 40), lane(30, 40, 60)))
    original = scene(*chained(lane(1), lane(2, 20, 40), lane(3, 40, 60)))
    assert build_lane_graph(original).is_isomorphic(build_lane_graph(renumbered))


def test_topology_changed(road_scene):
    moved = road_scene.with_elements(
        [e.with_geometry(e.geometry.translated(0.0, 0.5)) if e.id == 2 else e for e in road_scene.elements()]
    )
    assert not topology_changed(road_scene, moved)

    # unlinking the right lane leaves three separate segments
    cut = road_scene.with_elements(
        [replace(e, successors=(), predecessors=()) if e.id in (1, 2, 3) else e for e in road_scene.elements()]
    )
    assert topology_changed(road_scene, cut)
    assert topology_changed(road_scene, road_scene.with_elements(e for e in road_scene.elements() if e.id != 6))


@pytest.mark.parametrize(
    "points, expected",
    [
        (((0, 0), (10, 0), (20, 0)), "straight"),
        (((0, 0), (10, 0), (20, 5)), "straight"),
        (((0, 0), (10, 0), (10, 10)), "left"),
        (((0, 0), (10, 0), (15, -10)), "right"),
    ],
)
def test_turn_class(points, expected):
    assert turn_class(replace(lane(1), centerline=Polyline2D(points))) == expected


def test_topological_function(road_scene):
    assert topological_function(road_scene[2], road_scene) == (0, "straight")
    assert topological_function(road_scene[5], road_scene) == (1, "straight")
    assert topological_function(road_scene[1], road_scene) == (None, "straight")
