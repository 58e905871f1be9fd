"""
Distances between predicted and ground-truth map elements.
"""
from __future__ import annotations

import math
from typing import Union

import numpy as np
from scipy.spatial.distance import cdist

from .errors import EmptyInput
from .model import ElementGeometry, ElementKind
from .utils import Polyline2D

Points = Union[Polyline2D, np.ndarray, list]

NOT_MATCHABLE = math.inf


def _as_points(p: Points, name: str) -> np.ndarray:
    xy = p.xy if isinstance(p, Polyline2D) else np.asarray(p, dtype=float).reshape(-1, 2)
    if len(xy) == 0:
        raise EmptyInput(f"'{name}' has no points")
    return xy


def chamfer(p: Points, q: Points) -> float:
    """
    Symmetric Chamfer distance: the mean of both directed mean nearest-neighbor distances.

    :param p: a point set, shape (n, 2)
    :param q: a point set, shape (m, 2)
    :return: distance in meters
    """
    d = cdist(_as_points(p, "p"), _as_points(q, "q"))
    return 0.5 * (float(np.mean(np.min(d, axis=1))) + float(np.mean(np.min(d, axis=0))))


def frechet(p: Points, q: Points) -> float:
    """
    Discrete Fréchet distance between two polylines, by dynamic programming over their vertices.
    The polylines are used as given; resample them first to compare at a fixed density.
    """
    d = cdist(_as_points(p, "p"), _as_points(q, "q"))
    n, m = d.shape
    ca = np.empty((n, m))
    ca[0, 0] = d[0, 0]
    for i in range(1, n):
        ca[i, 0] = max(ca[i - 1, 0], d[i, 0])
    for j in range(1, m):
        ca[0, j] = max(ca[0, j - 1], d[0, j])
    for i in range(1, n):
        for j in range(1, m):
            ca[i, j] = max(min(ca[i - 1, j], ca[i - 1, j - 1], ca[i, j - 1]), d[i, j])
    return float(ca[-1, -1])


def _boundary_points(g: ElementGeometry) -> np.ndarray:
    return np.vstack([g.left_lane_boundary.xy, g.right_lane_boundary.xy])


def lane_distance(gt: ElementGeometry, pred: ElementGeometry, c_match: bool = True) -> float:
    """
    Change-aware lane segment distance: half the sum of the boundary Chamfer distance and the
    centerline Fréchet distance, or NOT_MATCHABLE when the change classes disagree.

    :param gt: ground-truth geometry, each polyline resampled to 10 points
    :param pred: predicted geometry, each polyline resampled to 10 points
    :param c_match: whether the predicted change class equals the ground truth's
    :return: distance in meters, or math.inf
    """
    if not c_match:
        return NOT_MATCHABLE
    return 0.5 * (chamfer(_boundary_points(gt), _boundary_points(pred)) + frechet(gt.centerline, pred.centerline))


def crossing_distance(gt: ElementGeometry, pred: ElementGeometry, c_match: bool = True) -> float:
    """Crossings have no direction: Chamfer distance between the boundary point sets."""
    if not c_match:
        return NOT_MATCHABLE
    return chamfer(_boundary_points(gt), _boundary_points(pred))


def element_distance(kind: ElementKind, gt: ElementGeometry, pred: ElementGeometry, c_match: bool = True) -> float:
    if ElementKind(kind) is ElementKind.LANE_SEGMENT:
        return lane_distance(gt, pred, c_match)
    return crossing_distance(gt, pred, c_match)
