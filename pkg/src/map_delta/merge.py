"""
Scene refinements: merging consecutive lane segments and unifying crossing orientation.
"""
from __future__ import annotations

import logging
from dataclasses import asdict, dataclass, fields, replace
from typing import Any, Mapping, Optional

import numpy as np
from shapely.geometry import Polygon

from .errors import GeometryError, SchemaError
from .model import ElementGeometry, LaneSegment, MapScene, PedestrianCrossing
from .utils import Polyline2D, aligned_ring, boundaries_opposed, signed_area

logger = logging.getLogger(__name__)

JOINT_TOLERANCE = 1e-6


@dataclass(frozen=True)
class MergePolicy:
    """
    Which properties two consecutive segments must share to be merged. The shared junction
    must always have degree 2: `a` has `b` as its only successor and `b` has `a` as its only predecessor.
    """

    same_lane_type: bool = True
    same_marks: bool = True
    same_intersection: bool = True
    same_change_status: bool = True

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "MergePolicy":
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(d) - known)
        if unknown:
            raise SchemaError(f"unknown merge policy fields {unknown}")
        return cls(**d)

    def to_dict(self) -> dict[str, Any]:
        return asdict(self)

    def allows(self, a: LaneSegment, b: LaneSegment) -> bool:
        if a.id == b.id or a.successors != (b.id,) or b.predecessors != (a.id,) or a.id in b.successors:
            return False
        if self.same_lane_type and a.lane_type != b.lane_type:
            return False
        if self.same_marks and (a.left_lane_mark_type, a.right_lane_mark_type) != (
            b.left_lane_mark_type,
            b.right_lane_mark_type,
        ):
            return False
        if self.same_intersection and a.is_intersection != b.is_intersection:
            return False
        if self.same_change_status and set(a.change_hist) != set(b.change_hist):
            return False
        return True


def mergeable_pairs(scene: MapScene, policy: MergePolicy = MergePolicy()) -> list[tuple[int, int]]:
    """All (upstream, downstream) id pairs the policy allows to merge, in ascending order."""
    pairs = []
    for a in scene.lane_segments.values():
        if len(a.successors) == 1 and a.successors[0] in scene.lane_segments:
            b = scene.lane_segments[a.successors[0]]
            if policy.allows(a, b):
                pairs.append((a.id, b.id))
    return pairs


def concatenate(p: Polyline2D, q: Polyline2D, tol: float = JOINT_TOLERANCE) -> Polyline2D:
    """Join q to the end of p, dropping q's first point when it duplicates p's last."""
    tail = q.points[1:] if np.linalg.norm(np.subtract(p.points[-1], q.points[0])) <= tol else q.points
    return Polyline2D(p.points + tail)


def merge_pair(scene: MapScene, a_id: int, b_id: int) -> MapScene:
    """
    Merge lane segment b into its predecessor a. The merged segment keeps a's id, properties and
    predecessors and takes b's successors; every reference to b is rewired to a.

    :param scene: a scene containing both segments
    :param a_id: the upstream segment
    :param b_id: the downstream segment, a's only successor
    :return: a new scene with one segment fewer
    """
    a, b = scene.lane_segments[a_id], scene.lane_segments[b_id]
    if a.successors != (b_id,) or b.predecessors != (a_id,):
        raise ValueError(f"segments {a_id} and {b_id} are not a degree-2 chain")

    merged = replace(
        a.with_geometry(
            ElementGeometry(
                concatenate(a.left_lane_boundary, b.left_lane_boundary),
                concatenate(a.right_lane_boundary, b.right_lane_boundary),
                concatenate(a.centerline, b.centerline),
            )
        ),
        successors=b.successors,
        left_neighbor_id=a.left_neighbor_id if a.left_neighbor_id is not None else b.left_neighbor_id,
        right_neighbor_id=a.right_neighbor_id if a.right_neighbor_id is not None else b.right_neighbor_id,
    )

    def rewire(i: Optional[int]) -> Optional[int]:
        return a_id if i == b_id else i

    elements = []
    for e in scene.elements():
        if e.id == b_id:
            continue
        if e.id == a_id:
            e = merged
        if isinstance(e, LaneSegment):
            e = replace(
                e,
                successors=tuple(map(rewire, e.successors)),
                predecessors=tuple(map(rewire, e.predecessors)),
                left_neighbor_id=rewire(e.left_neighbor_id),
                right_neighbor_id=rewire(e.right_neighbor_id),
            )
            if e.id == a_id:
                # a segment is never its own neighbor after absorbing one
                e = replace(
                    e,
                    left_neighbor_id=None if e.left_neighbor_id == a_id else e.left_neighbor_id,
                    right_neighbor_id=None if e.right_neighbor_id == a_id else e.right_neighbor_id,
                )
        elements.append(e)

    logger.debug(f"merged lane segment {b_id} into {a_id}")
    return scene.with_elements(elements)


def merge_elements(scene: MapScene, policy: MergePolicy = MergePolicy()) -> MapScene:
    """
    Resolve unnecessary breakpoints: repeatedly merge consecutive lane segments whose shared
    junction has degree 2 and whose properties agree under the policy, until none is left.
    Pedestrian crossings are never merged.

    :param scene: a valid scene
    :param policy: the merge predicate. By default, lane type, marks, intersection flag and change
                    status must all be equal
    :return: the fixed point
    """
    merges = 0
    while True:
        pairs = mergeable_pairs(scene, policy)
        if not pairs:
            break
        scene = merge_pair(scene, *pairs[0])
        merges += 1
    logger.info(f"'{scene.scene_id}': {merges} lane segment merges")
    return scene


def _unify_crossing(pc: PedestrianCrossing) -> PedestrianCrossing:
    left, right, center = pc.geometry.polylines()
    if boundaries_opposed(left, right):
        right = right.reversed()
    ring = aligned_ring(left, right)
    if not Polygon(ring).is_valid:
        raise GeometryError(f"pedestrian crossing {pc.id} encloses a self-intersecting polygon", pc.id)
    if signed_area(ring) < 0.0:
        left, right = right, left

    start = 0.5 * (left.xy[0] + right.xy[0])
    end = 0.5 * (left.xy[-1] + right.xy[-1])
    c = center.xy
    if np.linalg.norm(c[0] - end) + np.linalg.norm(c[-1] - start) < np.linalg.norm(c[0] - start) + np.linalg.norm(c[-1] - end):
        center = center.reversed()

    unified = pc.with_geometry(ElementGeometry(left, right, center))
    if unified != pc:
        logger.debug(f"reoriented pedestrian crossing {pc.id}")
    return unified


def unify_crossing_orientation(scene: MapScene) -> MapScene:
    """
    Reorder and reverse crossing boundaries so that both run in the same direction, the enclosed
    polygon is counterclockwise and the centerline runs along the boundaries. Geometry is only
    reordered, never moved.

    :param scene: a valid scene
    :return: a new scene; applying the function again changes nothing
    :raise GeometryError: a crossing polygon self-intersects
    """
    return scene.with_elements(
        _unify_crossing(e) if isinstance(e, PedestrianCrossing) else e for e in scene.elements()
    )
