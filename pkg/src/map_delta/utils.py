"""
Polyline geometry shared by every other module.

Points are metric (x, y) pairs. A Polyline2D is an immutable value; all helpers return new
values and never modify their inputs.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Iterable, Optional, Sequence

import numpy as np
from shapely.geometry import LineString, MultiLineString, box

from .errors import DegenerateInput, GeometryError

logger = logging.getLogger(__name__)

POINT_TOLERANCE = 1e-9


@dataclass(frozen=True)
class Polyline2D:
    points: tuple[tuple[float, float], ...]

    def __post_init__(self):
        points = tuple((float(x), float(y)) for x, y in self.points)
        object.__setattr__(self, "points", points)

        if len(points) < 2:
            raise GeometryError(f"a polyline needs at least 2 points, got {len(points)}")
        xy = np.asarray(points)
        if not np.all(np.isfinite(xy)):
            raise GeometryError("polyline coordinates must be finite")
        steps = np.linalg.norm(np.diff(xy, axis=0), axis=1)
        if np.any(steps <= POINT_TOLERANCE):
            i = int(np.argmax(steps <= POINT_TOLERANCE))
            raise GeometryError(f"consecutive points {i} and {i + 1} coincide")

    @classmethod
    def from_xy(cls, xy: Iterable[Sequence[float]]) -> "Polyline2D":
        return cls(tuple((float(x), float(y)) for x, y in xy))

    @property
    def xy(self) -> np.ndarray:
        return np.asarray(self.points, dtype=float)

    def __len__(self) -> int:
        return len(self.points)

    @property
    def length(self) -> float:
        return arc_length(self.xy)

    def reversed(self) -> "Polyline2D":
        return Polyline2D(self.points[::-1])

    def translated(self, dx: float, dy: float) -> "Polyline2D":
        return Polyline2D.from_xy(self.xy + np.array([dx, dy]))


def cumulative_lengths(xy: np.ndarray) -> np.ndarray:
    steps = np.linalg.norm(np.diff(xy, axis=0), axis=1)
    return np.concatenate([[0.0], np.cumsum(steps)])


def arc_length(xy: np.ndarray) -> float:
    return float(np.sum(np.linalg.norm(np.diff(xy, axis=0), axis=1)))


def drop_duplicate_points(xy: np.ndarray, tol: float = POINT_TOLERANCE) -> np.ndarray:
    """Remove points closer than `tol` to their kept predecessor; the last point always survives."""
    if len(xy) == 0:
        return xy
    kept = [xy[0]]
    for p in xy[1:]:
        if np.linalg.norm(p - kept[-1]) > tol:
            kept.append(p)
    if len(kept) > 1 and np.linalg.norm(xy[-1] - kept[-1]) > 0.0:
        kept[-1] = xy[-1]
    return np.asarray(kept)


def resample_polyline(p: Polyline2D, n: int) -> Polyline2D:
    """
    Resample a polyline to n points spaced uniformly by arc length.
    The first and last points are kept exactly.

    :param p: the polyline to resample
    :param n: number of points of the result, at least 2
    :return: a new polyline with n points
    """
    if n < 2:
        raise ValueError(f"'n' must be at least 2, but got {n}")

    xy = p.xy
    s = cumulative_lengths(xy)
    total = s[-1]
    if total <= 0.0:
        raise DegenerateInput("cannot resample a polyline of zero length")

    targets = np.linspace(0.0, total, n)
    out = np.column_stack([np.interp(targets, s, xy[:, 0]), np.interp(targets, s, xy[:, 1])])
    out[0] = xy[0]
    out[-1] = xy[-1]
    return Polyline2D.from_xy(out)


def resampled_xy(p: Polyline2D, n: int) -> np.ndarray:
    return resample_polyline(p, n).xy


def max_deviation(p: Polyline2D, q: Polyline2D, n: int) -> float:
    """Largest pointwise distance after resampling both polylines to n points."""
    return float(np.max(np.linalg.norm(resampled_xy(p, n) - resampled_xy(q, n), axis=1)))


def midline(left: Polyline2D, right: Polyline2D, n: int) -> Polyline2D:
    """Pointwise midpoints of the two boundaries resampled to n points."""
    return Polyline2D.from_xy(0.5 * (resampled_xy(left, n) + resampled_xy(right, n)))


def signed_area(ring: np.ndarray) -> float:
    """Shoelace area of an implicitly closed ring; positive when counterclockwise."""
    x, y = ring[:, 0], ring[:, 1]
    return 0.5 * float(np.dot(x, np.roll(y, -1)) - np.dot(np.roll(x, -1), y))


def boundary_ring(left: Polyline2D, right: Polyline2D) -> np.ndarray:
    """
    Polygon ring enclosed by a boundary pair: the right boundary forward, then the left one backward.
    For a lane whose left boundary lies to the left of its driving direction the ring is counterclockwise.
    """
    return np.vstack([right.xy, left.xy[::-1]])


def boundaries_opposed(left: Polyline2D, right: Polyline2D) -> bool:
    """Whether two boundaries run in opposite directions, judged by pairing their endpoints."""
    l, r = left.xy, right.xy
    same = np.linalg.norm(l[0] - r[0]) + np.linalg.norm(l[-1] - r[-1])
    crossed = np.linalg.norm(l[0] - r[-1]) + np.linalg.norm(l[-1] - r[0])
    return bool(crossed < same)


def aligned_ring(left: Polyline2D, right: Polyline2D) -> np.ndarray:
    """Like boundary_ring, with the right boundary reversed first when the two run in opposite directions."""
    return boundary_ring(left, right.reversed() if boundaries_opposed(left, right) else right)


def heading(xy: np.ndarray, at_start: bool) -> float:
    d = xy[1] - xy[0] if at_start else xy[-1] - xy[-2]
    return math.atan2(d[1], d[0])


def heading_change_deg(p: Polyline2D) -> float:
    """Signed heading change from the first to the last segment in degrees, wrapped to (-180, 180]."""
    xy = p.xy
    delta = math.degrees(heading(xy, at_start=False) - heading(xy, at_start=True))
    while delta <= -180.0:
        delta += 360.0
    while delta > 180.0:
        delta -= 360.0
    return delta


def lateral_offsets(p: Polyline2D, reference: Polyline2D, n: int = 10) -> np.ndarray:
    """
    Signed offsets of p's resampled points from reference's, measured along the reference's left normal.
    Positive values lie to the left of the reference's direction.
    """
    ref = resampled_xy(reference, n)
    pts = resampled_xy(p, n)
    tangents = np.gradient(ref, axis=0)
    norms = np.linalg.norm(tangents, axis=1, keepdims=True)
    tangents = tangents / np.where(norms > 0.0, norms, 1.0)
    normals = np.column_stack([-tangents[:, 1], tangents[:, 0]])
    return np.sum((pts - ref) * normals, axis=1)


def mean_lateral_offset(p: Polyline2D, reference: Polyline2D, n: int = 10) -> float:
    return float(np.mean(lateral_offsets(p, reference, n)))


def rotation(theta: float) -> np.ndarray:
    c, s = math.cos(theta), math.sin(theta)
    return np.array([[c, -s], [s, c]])


def world_to_ego(xy: np.ndarray, x: float, y: float, theta: float) -> np.ndarray:
    # row vectors: p_ego = R(-theta) (p - t)  <=>  (p - t) @ R(theta)
    return np.dot(xy - np.array([x, y]), rotation(theta))


def ego_to_world(xy: np.ndarray, x: float, y: float, theta: float) -> np.ndarray:
    return np.dot(xy, rotation(theta).T) + np.array([x, y])


def clip_to_square(xy: np.ndarray, half_extent: float) -> Optional[np.ndarray]:
    """
    Clip an ego-frame polyline to the square [-half_extent, half_extent]^2.
    Intersection points with the square are inserted exactly; when the polyline leaves and
    re-enters the square, the longest piece is kept.

    :return: the clipped points (`xy` itself when nothing had to be clipped), or None when
             nothing of positive length remains
    """
    if np.all(np.abs(xy) <= half_extent + POINT_TOLERANCE):
        return xy

    square = box(-half_extent, -half_extent, half_extent, half_extent)
    line = LineString(xy)
    piece = line.intersection(square)
    if piece.is_empty:
        return None
    if isinstance(piece, MultiLineString) or piece.geom_type == "GeometryCollection":
        lines = [g for g in piece.geoms if isinstance(g, LineString) and g.length > 0.0]
        if not lines:
            return None
        if len(lines) > 1:
            logger.debug(f"polyline split into {len(lines)} pieces by the patch border, keeping the longest")
        piece = max(lines, key=lambda g: g.length)
    if not isinstance(piece, LineString) or piece.length <= POINT_TOLERANCE:
        return None

    out = np.clip(np.asarray(piece.coords, dtype=float)[:, :2], -half_extent, half_extent)
    out = drop_duplicate_points(out)
    return out if len(out) >= 2 else None


def clamp_to_square(xy: np.ndarray, half_extent: float) -> Optional[np.ndarray]:
    """
    Move every vertex of an ego-frame polyline to its nearest point of the square
    [-half_extent, half_extent]^2. A polyline outside the square collapses onto the border.

    :return: the clamped points, or None when they all fall on one point
    """
    out = drop_duplicate_points(np.clip(np.asarray(xy, dtype=float), -half_extent, half_extent))
    return out if len(out) >= 2 else None
