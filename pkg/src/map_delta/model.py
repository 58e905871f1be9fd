"""
Vectorized HD map model: lane segments and pedestrian crossings keyed by a globally unique id.

All types are frozen dataclasses. Operations in this package never modify a scene; they build
new ones with `dataclasses.replace`.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Any, Iterator, Mapping, Optional, Union

import numpy as np

from .utils import Polyline2D, boundary_ring


class MarkType(str, Enum):
    SOLID = "solid"
    DASHED = "dashed"
    DOUBLE_SOLID = "double-solid"
    DOUBLE_DASHED = "double-dashed"
    DASH_SOLID = "dash-solid"
    SOLID_DASH = "solid-dash"
    NONE = "none"
    UNKNOWN = "unknown"


class MarkColor(str, Enum):
    WHITE = "white"
    YELLOW = "yellow"
    BLUE = "blue"
    NON_VISIBLE = "non-visible"


class LaneType(str, Enum):
    VEHICLE = "vehicle"
    BIKE = "bike"
    BUS = "bus"


class ElementKind(str, Enum):
    LANE_SEGMENT = "lane_segment"
    PEDESTRIAN_CROSSING = "pedestrian_crossing"


# values allowed in change_hist
CHANGE_TAGS = ("geometry", "marking", "type", "connectivity", "insertion", "deletion", "reroute")


@dataclass(frozen=True)
class LaneMarkType:
    mark: MarkType
    color: MarkColor

    def __post_init__(self):
        object.__setattr__(self, "mark", MarkType(self.mark))
        object.__setattr__(self, "color", MarkColor(self.color))

    @property
    def is_implicit(self) -> bool:
        """Unpainted boundary: there is no marking to alter or delete."""
        return self.mark is MarkType.NONE

    def __str__(self):
        return f"{self.mark.value}/{self.color.value}"


SOLID_WHITE = LaneMarkType(MarkType.SOLID, MarkColor.WHITE)
NO_MARK = LaneMarkType(MarkType.NONE, MarkColor.NON_VISIBLE)


@dataclass(frozen=True)
class ElementGeometry:
    left_lane_boundary: Polyline2D
    right_lane_boundary: Polyline2D
    centerline: Polyline2D

    def polylines(self) -> tuple[Polyline2D, Polyline2D, Polyline2D]:
        return self.left_lane_boundary, self.right_lane_boundary, self.centerline

    def ring(self) -> np.ndarray:
        return boundary_ring(self.left_lane_boundary, self.right_lane_boundary)

    def translated(self, dx: float, dy: float) -> "ElementGeometry":
        return ElementGeometry(*(p.translated(dx, dy) for p in self.polylines()))


def _ids(values) -> tuple[int, ...]:
    return tuple(sorted({int(v) for v in values}))


@dataclass(frozen=True)
class LaneSegment:
    id: int
    is_intersection: bool
    lane_type: LaneType
    left_lane_boundary: Polyline2D
    right_lane_boundary: Polyline2D
    centerline: Polyline2D
    left_lane_mark_type: LaneMarkType
    right_lane_mark_type: LaneMarkType
    successors: tuple[int, ...] = ()
    predecessors: tuple[int, ...] = ()
    left_neighbor_id: Optional[int] = None
    right_neighbor_id: Optional[int] = None
    is_modified: bool = False
    change_hist: tuple[str, ...] = ()
    # fields of the source document this model does not know about, kept for round trips
    extras: Mapping[str, Any] = field(default_factory=dict, hash=False)

    kind = ElementKind.LANE_SEGMENT

    def __post_init__(self):
        object.__setattr__(self, "id", int(self.id))
        object.__setattr__(self, "lane_type", LaneType(self.lane_type))
        object.__setattr__(self, "successors", _ids(self.successors))
        object.__setattr__(self, "predecessors", _ids(self.predecessors))
        object.__setattr__(self, "change_hist", tuple(self.change_hist))

    @property
    def geometry(self) -> ElementGeometry:
        return ElementGeometry(self.left_lane_boundary, self.right_lane_boundary, self.centerline)

    def with_geometry(self, geometry: ElementGeometry) -> "LaneSegment":
        return replace(
            self,
            left_lane_boundary=geometry.left_lane_boundary,
            right_lane_boundary=geometry.right_lane_boundary,
            centerline=geometry.centerline,
        )

    def mark(self, side: str) -> LaneMarkType:
        return self.left_lane_mark_type if side == "left" else self.right_lane_mark_type

    def neighbor(self, side: str) -> Optional[int]:
        return self.left_neighbor_id if side == "left" else self.right_neighbor_id

    def references(self) -> Iterator[tuple[str, int]]:
        for i in self.successors:
            yield "successors", i
        for i in self.predecessors:
            yield "predecessors", i
        if self.left_neighbor_id is not None:
            yield "left_neighbor_id", self.left_neighbor_id
        if self.right_neighbor_id is not None:
            yield "right_neighbor_id", self.right_neighbor_id


@dataclass(frozen=True)
class PedestrianCrossing:
    id: int
    left_lane_boundary: Polyline2D
    right_lane_boundary: Polyline2D
    centerline: Polyline2D
    is_modified: bool = False
    change_hist: tuple[str, ...] = ()
    extras: Mapping[str, Any] = field(default_factory=dict, hash=False)

    kind = ElementKind.PEDESTRIAN_CROSSING

    def __post_init__(self):
        object.__setattr__(self, "id", int(self.id))
        object.__setattr__(self, "change_hist", tuple(self.change_hist))

    @property
    def geometry(self) -> ElementGeometry:
        return ElementGeometry(self.left_lane_boundary, self.right_lane_boundary, self.centerline)

    def with_geometry(self, geometry: ElementGeometry) -> "PedestrianCrossing":
        return replace(
            self,
            left_lane_boundary=geometry.left_lane_boundary,
            right_lane_boundary=geometry.right_lane_boundary,
            centerline=geometry.centerline,
        )

    def references(self) -> Iterator[tuple[str, int]]:
        return iter(())


MapElement = Union[LaneSegment, PedestrianCrossing]


def with_change_tags(element: MapElement, tags) -> MapElement:
    """Append change tags not yet recorded, keeping the history order."""
    hist = list(element.change_hist)
    for tag in tags:
        if tag not in hist:
            hist.append(tag)
    return replace(element, change_hist=tuple(hist), is_modified=bool(hist))


@dataclass(frozen=True)
class MapScene:
    lane_segments: Mapping[int, LaneSegment] = field(default_factory=dict, hash=False)
    pedestrian_crossings: Mapping[int, PedestrianCrossing] = field(default_factory=dict, hash=False)
    scene_id: str = ""
    extras: Mapping[str, Any] = field(default_factory=dict, hash=False)

    def __post_init__(self):
        # id-sorted so iteration order never depends on how the scene was assembled
        object.__setattr__(self, "lane_segments", {k: self.lane_segments[k] for k in sorted(self.lane_segments)})
        object.__setattr__(
            self, "pedestrian_crossings", {k: self.pedestrian_crossings[k] for k in sorted(self.pedestrian_crossings)}
        )

    @classmethod
    def from_elements(cls, elements, scene_id: str = "", extras: Optional[Mapping[str, Any]] = None) -> "MapScene":
        lanes = {}
        crossings = {}
        for e in elements:
            (lanes if e.kind is ElementKind.LANE_SEGMENT else crossings)[e.id] = e
        return cls(lanes, crossings, scene_id, dict(extras or {}))

    def __len__(self) -> int:
        return len(self.lane_segments) + len(self.pedestrian_crossings)

    def __contains__(self, element_id: int) -> bool:
        return element_id in self.lane_segments or element_id in self.pedestrian_crossings

    def get(self, element_id: int) -> Optional[MapElement]:
        e = self.lane_segments.get(element_id)
        return e if e is not None else self.pedestrian_crossings.get(element_id)

    def __getitem__(self, element_id: int) -> MapElement:
        e = self.get(element_id)
        if e is None:
            raise KeyError(element_id)
        return e

    def elements(self) -> list[MapElement]:
        """All elements in ascending id order."""
        return sorted([*self.lane_segments.values(), *self.pedestrian_crossings.values()], key=lambda e: e.id)

    def ids(self) -> set[int]:
        return set(self.lane_segments) | set(self.pedestrian_crossings)

    def next_id(self) -> int:
        return max(self.ids(), default=0) + 1

    def with_elements(self, elements) -> "MapScene":
        return MapScene.from_elements(elements, self.scene_id, self.extras)

    def without_change_status(self) -> "MapScene":
        return self.with_elements(replace(e, is_modified=False, change_hist=()) for e in self.elements())


@dataclass(frozen=True)
class EgoPose:
    timestamp: int
    x: float
    y: float
    heading: float

    def __post_init__(self):
        if not all(math.isfinite(v) for v in (self.x, self.y, self.heading)):
            raise ValueError(f"pose at {self.timestamp} has non-finite coordinates")
