"""
Non-directional lane graph: every lane segment is one edge, junctions are vertices.

A vertex is the equivalence class of segment endpoints joined by predecessor/successor links.
The end of `a` and the start of `b` fall into the same class whenever `b` is a successor of `a`
(or `a` a predecessor of `b`).
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Mapping, Optional

import networkx as nx

from .model import LaneSegment, MapScene
from .utils import heading_change_deg

logger = logging.getLogger(__name__)

START = 0
END = 1

TURN_THRESHOLD_DEG = 30.0

Endpoint = tuple[int, int]
Vertex = tuple[Endpoint, ...]


@dataclass(frozen=True)
class LaneGraph:
    vertices: tuple[Vertex, ...]
    incidence: Mapping[int, tuple[Vertex, Vertex]] = field(hash=False)

    @property
    def edges(self) -> tuple[int, ...]:
        return tuple(self.incidence)

    def degree(self, vertex: Vertex) -> int:
        # a vertex gathers one endpoint per incident edge end
        return len(vertex)

    def junction(self, segment_id: int, end: int) -> Vertex:
        u, v = self.incidence[segment_id]
        return u if end == START else v

    def to_networkx(self) -> nx.MultiGraph:
        g = nx.MultiGraph()
        g.add_nodes_from(self.vertices)
        for edge_id, (u, v) in self.incidence.items():
            g.add_edge(u, v, key=edge_id)
        return g

    def is_isomorphic(self, other: "LaneGraph") -> bool:
        """Whether both graphs have the same topology, ignoring segment ids."""
        if len(self.vertices) != len(other.vertices) or len(self.incidence) != len(other.incidence):
            return False
        if sorted(map(len, self.vertices)) != sorted(map(len, other.vertices)):
            return False
        return nx.is_isomorphic(self.to_networkx(), other.to_networkx())


def build_lane_graph(scene: MapScene) -> LaneGraph:
    """
    Build the lane graph of a scene. Links to ids outside the scene are ignored.

    :param scene: a scene
    :return: a LaneGraph with one edge per lane segment
    """
    joints = nx.Graph()
    for ls in scene.lane_segments.values():
        joints.add_node((ls.id, START))
        joints.add_node((ls.id, END))
    for ls in scene.lane_segments.values():
        for s in ls.successors:
            if s in scene.lane_segments:
                joints.add_edge((ls.id, END), (s, START))
        for p in ls.predecessors:
            if p in scene.lane_segments:
                joints.add_edge((p, END), (ls.id, START))

    vertices = sorted(tuple(sorted(c)) for c in nx.connected_components(joints))
    owner = {endpoint: v for v in vertices for endpoint in v}
    incidence = {i: (owner[(i, START)], owner[(i, END)]) for i in scene.lane_segments}

    logger.debug(f"lane graph of '{scene.scene_id}': {len(vertices)} vertices, {len(incidence)} edges")
    return LaneGraph(tuple(vertices), incidence)


def topology_changed(before: MapScene, after: MapScene) -> bool:
    return not build_lane_graph(before).is_isomorphic(build_lane_graph(after))


def turn_class(segment: LaneSegment) -> str:
    delta = heading_change_deg(segment.centerline)
    if delta > TURN_THRESHOLD_DEG:
        return "left"
    if delta < -TURN_THRESHOLD_DEG:
        return "right"
    return "straight"


def topological_function(segment: LaneSegment, scene: MapScene) -> tuple[Optional[int], str]:
    """
    Role of a segment on the road graph: the ordinal of its entry lane counted from the right
    (0 is the rightmost lane) and its turn class.

    The entry lane is the lowest-id predecessor present in the scene; its ordinal is the length of
    its right_neighbor chain. A segment without predecessors has no entry ordinal.
    """
    entry = next((p for p in segment.predecessors if p in scene.lane_segments), None)
    ordinal = None
    if entry is not None:
        ordinal = 0
        seen = {entry}
        current = scene.lane_segments[entry].right_neighbor_id
        while current is not None and current in scene.lane_segments and current not in seen:
            seen.add(current)
            ordinal += 1
            current = scene.lane_segments[current].right_neighbor_id
    return ordinal, turn_class(segment)
