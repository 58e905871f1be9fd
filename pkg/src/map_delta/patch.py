"""
Ego-centric patches: the square window around an ego pose in which a frame is evaluated.
"""
from __future__ import annotations

import logging
from dataclasses import replace
from typing import Optional

import numpy as np
from shapely.geometry import LineString, box

from .model import EgoPose, ElementGeometry, LaneSegment, MapElement, MapScene
from .utils import Polyline2D, clamp_to_square, clip_to_square, ego_to_world, world_to_ego

logger = logging.getLogger(__name__)

PATCH_EXTENT = 50.0


def _check_extent(extent: float):
    if not extent > 0.0:
        raise ValueError(f"'extent' must be positive, but got {extent}")


def _to_ego(p: Polyline2D, pose: EgoPose) -> np.ndarray:
    return world_to_ego(p.xy, pose.x, pose.y, pose.heading)


def to_ego_frame(scene: MapScene, pose: EgoPose) -> MapScene:
    """Express every element of the scene in the heading-aligned ego frame (x forward, y left)."""

    def move(e: MapElement) -> MapElement:
        return e.with_geometry(ElementGeometry(*(Polyline2D.from_xy(_to_ego(p, pose)) for p in e.geometry.polylines())))

    return scene.with_elements(move(e) for e in scene.elements())


def visible_ids(scene: MapScene, pose: EgoPose, extent: float = PATCH_EXTENT) -> set[int]:
    """
    Ids of the elements with at least one polyline touching the extent x extent square around the pose.

    :param scene: a scene in world coordinates
    :param pose: center and orientation of the square
    :param extent: side length of the square in meters
    :return: a set of element ids
    """
    _check_extent(extent)
    half = extent / 2.0
    square = box(-half, -half, half, half)
    return {
        e.id
        for e in scene.elements()
        if any(LineString(_to_ego(p, pose)).intersects(square) for p in e.geometry.polylines())
    }


def _crop_element(e: MapElement, pose: EgoPose, half: float, ego_frame: bool) -> Optional[MapElement]:
    egos = [_to_ego(p, pose) for p in e.geometry.polylines()]
    clipped = [clip_to_square(xy, half) for xy in egos]
    if all(c is None for c in clipped):
        return None

    cropped = []
    for p, ego, c in zip(e.geometry.polylines(), egos, clipped):
        if c is None:
            c = clamp_to_square(ego, half)
            if c is None:
                logger.warning(f"element {e.id} touches the patch at {pose.timestamp} but a polyline collapses to a point")
                return None
        if c is ego:
            cropped.append(Polyline2D.from_xy(ego) if ego_frame else p)
        elif ego_frame:
            cropped.append(Polyline2D.from_xy(c))
        else:
            cropped.append(Polyline2D.from_xy(ego_to_world(c, pose.x, pose.y, pose.heading)))
    return e.with_geometry(ElementGeometry(*cropped))


def crop_patch(scene: MapScene, pose: EgoPose, extent: float = PATCH_EXTENT, *, ego_frame: bool = False) -> MapScene:
    """
    Cut the extent x extent square centered on the pose out of a scene.

    Polylines are clipped at the square's border, keeping the longest piece when a polyline leaves
    and re-enters it. An element survives when any of its polylines keeps a piece of positive
    length; its polylines that miss the square are moved onto the border. Connectivity is restricted
    to the surviving elements and ids are preserved.

    :param scene: the scene to crop
    :param pose: ego pose; the square is rotated by its heading
    :param extent: side length of the square in meters. By default, 50
    :param ego_frame: By default False, returning world coordinates. If True, geometry is expressed
                    in the ego frame
    :return: the patch as a scene with the same scene id
    """
    _check_extent(extent)
    half = extent / 2.0

    kept = {}
    for e in scene.elements():
        c = _crop_element(e, pose, half, ego_frame)
        if c is not None:
            kept[c.id] = c

    def restrict(e: MapElement) -> MapElement:
        if not isinstance(e, LaneSegment):
            return e
        return replace(
            e,
            successors=tuple(i for i in e.successors if i in kept),
            predecessors=tuple(i for i in e.predecessors if i in kept),
            left_neighbor_id=e.left_neighbor_id if e.left_neighbor_id in kept else None,
            right_neighbor_id=e.right_neighbor_id if e.right_neighbor_id in kept else None,
        )

    patch = scene.with_elements(restrict(e) for e in kept.values())
    logger.debug(f"patch of '{scene.scene_id}' at {pose.timestamp}: {len(patch)} of {len(scene)} elements")
    return patch
