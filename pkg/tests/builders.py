"""
Small scenes for tests. Lanes run along +x, so their left boundary has the larger y.
"""
from dataclasses import replace

import numpy as np

from map_delta.model import (
    SOLID_WHITE,
    EgoPose,
    LaneMarkType,
    LaneSegment,
    MapScene,
    PedestrianCrossing,
)
from map_delta.utils import Polyline2D

DASHED_WHITE = LaneMarkType("dashed", "white")
DOUBLE_YELLOW = LaneMarkType("double-solid", "yellow")
LANE_WIDTH = 3.5


def straight(x0, x1, y, n=5) -> Polyline2D:
    xs = np.linspace(x0, x1, n)
    return Polyline2D.from_xy(np.column_stack([xs, np.full(n, float(y))]))


def lane(i, x0=0.0, x1=20.0, y=0.0, width=LANE_WIDTH, *, n=5, **kwargs) -> LaneSegment:
    """A straight lane whose right boundary lies at height y."""
    fields = dict(
        is_intersection=False,
        lane_type="vehicle",
        left_lane_boundary=straight(x0, x1, y + width, n),
        right_lane_boundary=straight(x0, x1, y, n),
        centerline=straight(x0, x1, y + width / 2, n),
        left_lane_mark_type=DASHED_WHITE,
        right_lane_mark_type=SOLID_WHITE,
    )
    fields.update(kwargs)
    return LaneSegment(i, **fields)


def crossing(i, x=30.0, y0=0.0, y1=7.0, width=3.0, **kwargs) -> PedestrianCrossing:
    """A crossing along +y centered on x; counterclockwise."""
    h = width / 2
    return PedestrianCrossing(
        i,
        left_lane_boundary=Polyline2D(((x - h, y0), (x - h, y1))),
        right_lane_boundary=Polyline2D(((x + h, y0), (x + h, y1))),
        centerline=Polyline2D(((x, y0), (x, y1))),
        **kwargs,
    )


def chained(*lanes: LaneSegment) -> list[LaneSegment]:
    """Link the lanes one after the other."""
    out = []
    for k, ls in enumerate(lanes):
        out.append(
            replace(
                ls,
                successors=ls.successors + ((lanes[k + 1].id,) if k + 1 < len(lanes) else ()),
                predecessors=ls.predecessors + ((lanes[k - 1].id,) if k > 0 else ()),
            )
        )
    return out


def scene(*elements, scene_id="scene") -> MapScene:
    return MapScene.from_elements(elements, scene_id)


def road(scene_id="road", length=3, with_crossing=True) -> MapScene:
    """
    Two lanes of `length` 20 m segments: the right lane has ids 1, 2, .., the left lane ids
    length + 1, ..; crossing 100 spans both lanes at x = 30.
    """
    right = chained(*(lane(k + 1, 20.0 * k, 20.0 * (k + 1), 0.0) for k in range(length)))
    left = chained(
        *(
            lane(length + k + 1, 20.0 * k, 20.0 * (k + 1), LANE_WIDTH, left_lane_mark_type=DOUBLE_YELLOW,
                 right_lane_mark_type=DASHED_WHITE)
            for k in range(length)
        )
    )
    right = [replace(r, left_neighbor_id=l.id) for r, l in zip(right, left)]
    left = [replace(l, right_neighbor_id=r.id) for r, l in zip(right, left)]
    elements = [*right, *left]
    if with_crossing:
        elements.append(crossing(100))
    return scene(*elements, scene_id=scene_id)


def pose(x=0.0, y=0.0, heading=0.0, t=0) -> EgoPose:
    return EgoPose(t, x, y, heading)
