"""
Seeded synthetic priors: stale maps derived from a ground-truth map.

Three regimes are available. Continuous noise jitters every boundary vertex; discrete noise
deletes or rigidly shifts whole elements; the rule-based generator applies realistic map
changes (crossings, bike lanes, marking edits) along an ego trajectory. The discrete and
rule-based generators also return the change set that restores the ground truth from the prior.

All randomness comes from a Philox generator seeded by the caller, and elements are visited in
ascending id order, so equal inputs give equal outputs on every platform.
"""
from __future__ import annotations

import json
import logging
from collections import Counter
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Any, Callable, Iterable, Mapping, Optional, Sequence, Union

import numpy as np
from shapely import affinity
from shapely.geometry import LineString, Point, Polygon
from shapely.geometry.base import BaseGeometry
from shapely.ops import unary_union

from .changes import SIDES, ChangeSet
from .diff import GEOMETRY_TOLERANCE, diff_maps, scrub_references
from .errors import SchemaError
from .model import (
    NO_MARK,
    SOLID_WHITE,
    EgoPose,
    ElementGeometry,
    LaneMarkType,
    LaneSegment,
    LaneType,
    MapElement,
    MapScene,
    MarkColor,
    MarkType,
    PedestrianCrossing,
)
from .utils import Polyline2D, aligned_ring, drop_duplicate_points, midline

logger = logging.getLogger(__name__)

# reasons a proposed crossing is rejected
OUTSIDE_BUFFER = "outside_buffer"
OUTSIDE_VIEW = "outside_view"
SHORT_SPAN = "short_span"
OVERLAP = "overlap"
NO_CANDIDATE = "no_candidate"

# marking transitions
RESTYLE = "restyle"
ERASE = "erase"
PAINT = "paint"
MARK_TRANSITIONS = (RESTYLE, ERASE, PAINT)

# marks an unpainted boundary receives
PAINT_MARKS = (SOLID_WHITE, LaneMarkType(MarkType.DASHED, MarkColor.WHITE))

_RESTYLED = {
    MarkType.SOLID: MarkType.DASHED,
    MarkType.DASHED: MarkType.SOLID,
    MarkType.DOUBLE_SOLID: MarkType.DOUBLE_DASHED,
    MarkType.DOUBLE_DASHED: MarkType.DOUBLE_SOLID,
    MarkType.DASH_SOLID: MarkType.SOLID_DASH,
    MarkType.SOLID_DASH: MarkType.DASH_SOLID,
}

# half length of the centerline piece the crossing axis is taken normal to
_TANGENT_REACH = 0.5


def make_rng(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(seed))


def remove_elements(scene: MapScene, ids: Iterable[int]) -> MapScene:
    """Drop elements together with every reference to them."""
    gone = set(ids)
    return scene.with_elements(
        scrub_references(e, gone) if isinstance(e, LaneSegment) else e for e in scene.elements() if e.id not in gone
    )


# ---------------------------------------------------------------------------- noise priors


def _jittered(p: Polyline2D, rng: np.random.Generator, sigma: float) -> Polyline2D:
    xy = p.xy
    return Polyline2D.from_xy(xy + rng.normal(0.0, sigma, xy.shape))


def perturb_continuous(gt: MapScene, sigma: float = 0.5, seed: int = 0) -> MapScene:
    """
    Continuous noise prior: every boundary vertex moves by i.i.d. Gaussian noise on each axis, and
    centerlines are rebuilt as the midpoints of the noisy boundaries. No change set is returned;
    vertex noise is not expressible as a handful of atomic changes.

    :param gt: the ground-truth map
    :param sigma: standard deviation in meters. By default, 0.5
    :param seed: RNG seed
    :return: the noisy prior, with the gt's change bookkeeping
    """
    if sigma < 0:
        raise ValueError(f"'sigma' must be non-negative, but got {sigma}")
    if sigma == 0:
        return gt

    rng = make_rng(seed)
    out = []
    for e in gt.elements():
        left = _jittered(e.left_lane_boundary, rng, sigma)
        right = _jittered(e.right_lane_boundary, rng, sigma)
        out.append(e.with_geometry(ElementGeometry(left, right, midline(left, right, len(e.centerline)))))
    logger.info(f"'{gt.scene_id}': jittered {len(out)} elements with sigma={sigma}")
    return gt.with_elements(out)


def perturb_discrete(
    gt: MapScene, p_del: float = 0.2, p_shift: float = 0.2, sigma: float = 0.5, seed: int = 0
) -> tuple[MapScene, ChangeSet]:
    """
    Discrete noise prior: each element is independently deleted with probability p_del, or moved
    by one Gaussian drift vector shared by all of its vertices with probability p_shift.

    A drift whose largest component is within the geometry tolerance counts as no shift, so every
    shifted element shows up as a geometry change.

    :param gt: the ground-truth map
    :param p_del: deletion probability. By default, 0.2
    :param p_shift: shift probability. By default, 0.2
    :param sigma: drift standard deviation in meters. By default, 0.5
    :param seed: RNG seed
    :return: the prior and the change set that turns it back into gt
    """
    for name, p in (("p_del", p_del), ("p_shift", p_shift)):
        if not 0.0 <= p <= 1.0:
            raise ValueError(f"'{name}' must be in [0, 1], but got {p}")
    if p_del + p_shift > 1.0:
        raise ValueError(f"'p_del' + 'p_shift' must not exceed 1, but got {p_del + p_shift}")
    if sigma < 0:
        raise ValueError(f"'sigma' must be non-negative, but got {sigma}")

    rng = make_rng(seed)
    deleted = set()
    elements = []
    for e in gt.elements():
        u = rng.random()
        if u < p_del:
            deleted.add(e.id)
            continue
        if u < p_del + p_shift:
            dx, dy = rng.normal(0.0, sigma, 2)
            if max(abs(dx), abs(dy)) > GEOMETRY_TOLERANCE:
                e = e.with_geometry(e.geometry.translated(dx, dy))
        elements.append(e)

    prior = remove_elements(gt.with_elements(elements), deleted)
    cs = diff_maps(prior, gt)
    logger.info(f"'{gt.scene_id}': deleted {len(deleted)} of {len(gt)} elements, {len(cs)} restoring changes")
    return prior, cs


# ---------------------------------------------------------------------------- rule-based prior


@dataclass(frozen=True)
class RuleBasedConfig:
    intersection_weight: float = 4.5
    width_mean: float = 3.5
    width_std: float = 1.0
    width_clip: tuple[float, float] = (2.0, 4.0)
    min_height: float = 2.0
    max_iou: float = 0.05
    max_iterations_per_map: int = 20
    trajectory_buffer: float = 15.0
    marking_run_length: int = 3
    bike_run_length: int = 5
    max_bike_lanes: int = 2
    marking_sequences: int = 4
    crossing_insertions: int = 1
    crossing_deletions: int = 1
    # share of the trajectory-aligned box to keep crossings away from on every side; 0 is off
    avoid_outer_fraction: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "width_clip", tuple(float(v) for v in self.width_clip))
        for name in (
            "intersection_weight",
            "width_mean",
            "width_std",
            "min_height",
            "max_iou",
            "trajectory_buffer",
            "marking_run_length",
            "bike_run_length",
        ):
            if not getattr(self, name) > 0:
                raise ValueError(f"'{name}' must be positive, but got {getattr(self, name)}")
        for name in ("max_iterations_per_map", "max_bike_lanes", "marking_sequences", "crossing_insertions", "crossing_deletions"):
            v = getattr(self, name)
            if not isinstance(v, int) or isinstance(v, bool) or v < 0:
                raise ValueError(f"'{name}' must be a non-negative integer, but got {v!r}")
        if len(self.width_clip) != 2 or not 0 < self.width_clip[0] <= self.width_clip[1]:
            raise ValueError(f"'width_clip' must be ordered positive bounds, but got {self.width_clip}")
        if not 0.0 <= self.avoid_outer_fraction < 0.5:
            raise ValueError(f"'avoid_outer_fraction' must be in [0, 0.5), but got {self.avoid_outer_fraction}")

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "RuleBasedConfig":
        unknown = sorted(set(d) - {f.name for f in fields(cls)})
        if unknown:
            raise SchemaError(f"unknown rule-based config fields {unknown}")
        try:
            return cls(**d)
        except (TypeError, ValueError) as e:
            raise SchemaError(str(e)) from e

    @classmethod
    def load(cls, path: Union[str, Path]) -> "RuleBasedConfig":
        try:
            d = json.loads(Path(path).read_text(encoding="utf-8"))
        except json.JSONDecodeError as e:
            raise SchemaError(f"malformed JSON in {path}: {e.msg}") from e
        if not isinstance(d, dict):
            raise SchemaError(f"{path} must hold a JSON object")
        return cls.from_dict(d)

    def to_dict(self) -> dict[str, Any]:
        d = asdict(self)
        d["width_clip"] = list(self.width_clip)
        return d


@dataclass
class PerturbationStats:
    crossing_attempts: int = 0
    crossings_inserted: list[int] = field(default_factory=list)
    crossing_widths: list[float] = field(default_factory=list)
    crossings_deleted: list[int] = field(default_factory=list)
    rejections: Counter = field(default_factory=Counter)
    bike_runs: list[tuple[int, ...]] = field(default_factory=list)
    marking_runs: list[tuple[int, ...]] = field(default_factory=list)

    @property
    def bike_lanes(self) -> list[int]:
        return [i for run in self.bike_runs for i in run]

    def to_dict(self) -> dict[str, Any]:
        d = asdict(self)
        d["rejections"] = dict(sorted(self.rejections.items()))
        d["bike_runs"] = [list(r) for r in self.bike_runs]
        d["marking_runs"] = [list(r) for r in self.marking_runs]
        return d


def sample_crossing_width(rng: np.random.Generator, config: RuleBasedConfig = RuleBasedConfig()) -> float:
    lo, hi = config.width_clip
    return float(np.clip(rng.normal(config.width_mean, config.width_std), lo, hi))


def crossing_from_span(crossing_id: int, a: np.ndarray, b: np.ndarray, width: float) -> PedestrianCrossing:
    """
    Rectangular crossing along the axis a -> b, inflated by width / 2 on both sides with flat caps.
    The boundaries run along the axis and enclose a counterclockwise polygon.
    """
    a, b = np.asarray(a, dtype=float), np.asarray(b, dtype=float)
    d = (b - a) / np.linalg.norm(b - a)
    offset = 0.5 * width * np.array([-d[1], d[0]])
    return PedestrianCrossing(
        crossing_id,
        left_lane_boundary=Polyline2D.from_xy([a + offset, b + offset]),
        right_lane_boundary=Polyline2D.from_xy([a - offset, b - offset]),
        centerline=Polyline2D.from_xy([a, b]),
    )


def element_polygon(e: MapElement) -> Polygon:
    poly = Polygon(aligned_ring(e.left_lane_boundary, e.right_lane_boundary))
    return poly if poly.is_valid else poly.buffer(0)


def iou(a: Polygon, b: Polygon) -> float:
    union = a.union(b).area
    return a.intersection(b).area / union if union > 0.0 else 0.0


def _line_pieces(geom: BaseGeometry) -> list[LineString]:
    if geom.is_empty:
        return []
    if isinstance(geom, LineString):
        return [geom]
    return [g for g in getattr(geom, "geoms", ()) if isinstance(g, LineString) and not g.is_empty]


def trajectory_region(trajectory: Sequence[EgoPose], buffer: float) -> BaseGeometry:
    """The area within `buffer` meters of the ego trajectory."""
    xy = drop_duplicate_points(np.array([(p.x, p.y) for p in trajectory], dtype=float))
    path = Point(xy[0]) if len(xy) == 1 else LineString(xy)
    return path.buffer(buffer)


def field_of_view(region: BaseGeometry, avoid_outer_fraction: float) -> Optional[BaseGeometry]:
    """The trajectory-aligned bounding box of the region with the outer fraction cut away on every side."""
    if avoid_outer_fraction <= 0.0:
        return None
    box = region.minimum_rotated_rectangle
    keep = 1.0 - 2.0 * avoid_outer_fraction
    return affinity.scale(box, xfact=keep, yfact=keep, origin="centroid")


class RuleBasedPerturber:
    """
    Applies rule-based map changes to a copy of the ground truth, inside the area around an ego
    trajectory. Steps run in a fixed order: crossing deletion, crossing insertion, bike lane
    insertion and lane marking edits. An element changed by one step is left alone by later ones.

    >>> prior, cs = RuleBasedPerturber(gt, poses, RuleBasedConfig(), seed=3).run()
    """

    def __init__(self, gt: MapScene, trajectory: Sequence[EgoPose], config: RuleBasedConfig = RuleBasedConfig(), seed: int = 0):
        if not trajectory:
            raise ValueError("'trajectory' must not be empty")
        self.gt = gt
        self.config = config
        self.rng = make_rng(seed)
        self.stats = PerturbationStats()
        self.region = trajectory_region(trajectory, config.trajectory_buffer)
        self.view = field_of_view(self.region, config.avoid_outer_fraction)

        self._elements: dict[int, MapElement] = {e.id: e for e in gt.elements()}
        self._next_id = gt.next_id()
        self._touched: set[int] = set()

    def _new_id(self) -> int:
        i = self._next_id
        self._next_id += 1
        return i

    def _in_region(self, e: MapElement) -> bool:
        return any(LineString(p.xy).intersects(self.region) for p in e.geometry.polylines())

    def _lanes(self, accept: Callable[[LaneSegment], bool]) -> list[LaneSegment]:
        return [e for _, e in sorted(self._elements.items()) if isinstance(e, LaneSegment) and accept(e)]

    def _pick(self, candidates: Sequence[Any]) -> Any:
        return candidates[int(self.rng.integers(len(candidates)))]

    def _run(self, start: LaneSegment, length: int, accept: Callable[[LaneSegment], bool]) -> list[LaneSegment]:
        """Follow the lowest-id accepted successor from `start` for up to `length` segments."""
        run = [start]
        while len(run) < length:
            seen = {ls.id for ls in run}
            following = [
                self._elements[s]
                for s in run[-1].successors
                if s not in seen and isinstance(self._elements.get(s), LaneSegment) and accept(self._elements[s])
            ]
            if not following:
                break
            run.append(following[0])
        return run

    def run(self) -> tuple[MapScene, ChangeSet]:
        """
        :return: the prior and the change set that turns it back into the ground truth
        """
        self.delete_crossings()
        self.insert_crossings()
        self.insert_bike_lanes()
        self.perturb_markings()

        prior = self.gt.with_elements(self._elements.values())
        cs = diff_maps(prior, self.gt)
        logger.info(
            f"'{self.gt.scene_id}': {len(self.stats.crossings_inserted)} crossings inserted, "
            f"{len(self.stats.crossings_deleted)} deleted, {len(self.stats.bike_runs)} bike lanes, "
            f"{len(self.stats.marking_runs)} marking runs"
        )
        return prior, cs

    # ------------------------------------------------------------------------ crossings

    def delete_crossings(self):
        candidates = [pc.id for pc in self.gt.pedestrian_crossings.values() if self._in_region(pc)]
        k = min(self.config.crossing_deletions, len(candidates))
        if k == 0:
            return
        chosen = sorted(int(i) for i in self.rng.choice(candidates, size=k, replace=False))
        for i in chosen:
            del self._elements[i]
            self._touched.add(i)
        self.stats.crossings_deleted.extend(chosen)

    def _road_polygon(self, ls: LaneSegment) -> BaseGeometry:
        """Union of the lane and all lanes reachable from it through neighbor links."""
        members = {ls.id}
        for side in SIDES:
            cur = ls
            while True:
                n = cur.neighbor(side)
                if n is None or n in members or not isinstance(self.gt.get(n), LaneSegment):
                    break
                members.add(n)
                cur = self.gt.lane_segments[n]
        return unary_union([element_polygon(self.gt.lane_segments[i]) for i in sorted(members)])

    def _propose_crossing(self, ls: LaneSegment) -> tuple[Optional[PedestrianCrossing], Optional[str]]:
        cfg = self.config
        center = LineString(ls.centerline.xy)
        s = float(self.rng.uniform(0.0, center.length))
        width = sample_crossing_width(self.rng, cfg)

        waypoint = center.interpolate(s)
        if not self.region.contains(waypoint):
            return None, OUTSIDE_BUFFER
        if self.view is not None and not self.view.contains(waypoint):
            return None, OUTSIDE_VIEW

        a = np.asarray(center.interpolate(max(s - _TANGENT_REACH, 0.0)).coords[0])
        b = np.asarray(center.interpolate(min(s + _TANGENT_REACH, center.length)).coords[0])
        tangent = (b - a) / np.linalg.norm(b - a)
        normal = np.array([-tangent[1], tangent[0]])

        road = self._road_polygon(ls)
        minx, miny, maxx, maxy = road.bounds
        reach = float(np.hypot(maxx - minx, maxy - miny)) + 1.0
        w = np.asarray(waypoint.coords[0])
        transversal = LineString([w - reach * normal, w + reach * normal]).intersection(road)
        pieces = [g for g in _line_pieces(transversal) if g.distance(waypoint) < 1e-6]
        if not pieces or pieces[0].length <= cfg.min_height:
            return None, SHORT_SPAN

        ends = np.asarray(pieces[0].coords, dtype=float)
        crossing = crossing_from_span(self._next_id, ends[0, :2], ends[-1, :2], width)
        poly = element_polygon(crossing)
        for other in self._elements.values():
            if isinstance(other, PedestrianCrossing) and iou(poly, element_polygon(other)) >= cfg.max_iou:
                return None, OVERLAP
        return crossing, None

    def insert_crossings(self):
        """
        Sample crossings on lanes near the trajectory, favoring intersection lanes, until the
        configured number is placed or the attempt budget is spent. Running out is not an error.
        """
        cfg = self.config
        lanes = self._lanes(self._in_region)
        if not lanes or cfg.crossing_insertions == 0:
            if cfg.crossing_insertions:
                self.stats.rejections[NO_CANDIDATE] += 1
            return

        weights = np.array([cfg.intersection_weight if ls.is_intersection else 1.0 for ls in lanes])
        p = weights / weights.sum()
        placed = 0
        while placed < cfg.crossing_insertions and self.stats.crossing_attempts < cfg.max_iterations_per_map:
            self.stats.crossing_attempts += 1
            ls = lanes[int(self.rng.choice(len(lanes), p=p))]
            crossing, reason = self._propose_crossing(ls)
            if crossing is None:
                self.stats.rejections[reason] += 1
                continue
            crossing = replace(crossing, id=self._new_id())
            self._elements[crossing.id] = crossing
            self._touched.add(crossing.id)
            self.stats.crossings_inserted.append(crossing.id)
            self.stats.crossing_widths.append(float(np.linalg.norm(crossing.left_lane_boundary.xy[0] - crossing.right_lane_boundary.xy[0])))
            placed += 1

        if placed < cfg.crossing_insertions:
            self.stats.rejections[NO_CANDIDATE] += 1
            logger.info(f"'{self.gt.scene_id}': placed {placed} of {cfg.crossing_insertions} crossings in {cfg.max_iterations_per_map} attempts")

    # ------------------------------------------------------------------------ bike lanes

    def _bike_candidate(self, ls: LaneSegment) -> bool:
        return (
            ls.lane_type is LaneType.VEHICLE
            and not ls.is_intersection
            and ls.right_neighbor_id is None
            and ls.id in self.gt.lane_segments
            and ls.id not in self._touched
            and self._in_region(ls)
        )

    def _split(self, run: list[LaneSegment]):
        bike_ids = [self._new_id() for _ in run]
        for k, (ls, bike_id) in enumerate(zip(run, bike_ids)):
            left, right = ls.left_lane_boundary, ls.right_lane_boundary
            n = max(len(left), len(right), len(ls.centerline))
            middle = midline(left, right, n)
            self._elements[ls.id] = replace(
                ls.with_geometry(ElementGeometry(left, middle, midline(left, middle, n))),
                right_lane_mark_type=SOLID_WHITE,
                right_neighbor_id=bike_id,
            )
            self._elements[bike_id] = LaneSegment(
                bike_id,
                is_intersection=False,
                lane_type=LaneType.BIKE,
                left_lane_boundary=middle,
                right_lane_boundary=right,
                centerline=midline(middle, right, n),
                left_lane_mark_type=SOLID_WHITE,
                right_lane_mark_type=SOLID_WHITE,
                successors=bike_ids[k + 1 : k + 2],
                predecessors=bike_ids[k - 1 : k] if k > 0 else (),
                left_neighbor_id=ls.id,
            )
            self._touched.update((ls.id, bike_id))
        self.stats.bike_runs.append(tuple(bike_ids))

    def insert_bike_lanes(self):
        """Split runs of rightmost vehicle lanes in half and turn the right half into a bike lane."""
        for _ in range(self.config.max_bike_lanes):
            candidates = self._lanes(self._bike_candidate)
            if not candidates:
                break
            start = self._pick(candidates)
            self._split(self._run(start, self.config.bike_run_length, self._bike_candidate))

    # ------------------------------------------------------------------------ markings

    def _paintable(self, ls: LaneSegment, side: str) -> bool:
        """Unpainted divider between two lanes outside an intersection; other implicit boundaries stay unchanged."""
        return ls.mark(side).is_implicit and not ls.is_intersection and ls.neighbor(side) is not None

    def _editable_sides(self, ls: LaneSegment) -> list[str]:
        return [s for s in SIDES if not ls.mark(s).is_implicit or self._paintable(ls, s)]

    def _marking_candidate(self, ls: LaneSegment) -> bool:
        return (
            ls.id in self.gt.lane_segments
            and ls.id not in self._touched
            and bool(self._editable_sides(ls))
            and self._in_region(ls)
        )

    def _set_mark(self, ls: LaneSegment, side: str, mark: LaneMarkType):
        name = "left_lane_mark_type" if side == "left" else "right_lane_mark_type"
        self._elements[ls.id] = replace(ls, **{name: mark})
        self._touched.add(ls.id)

    def _sync_neighbor(self, ls: LaneSegment, side: str, old: LaneMarkType, new: LaneMarkType):
        """A boundary shared with a neighbor carries one marking; the neighbor follows when it is in the area."""
        n = self._elements.get(ls.neighbor(side)) if ls.neighbor(side) is not None else None
        if not isinstance(n, LaneSegment) or n.id in self._touched or not self._in_region(n):
            return
        facing = "right" if side == "left" else "left"
        if n.mark(facing) == old:
            self._set_mark(n, facing, new)

    def perturb_markings(self):
        """
        Edit the marking of one side along runs of consecutive lane segments: dashed and solid
        styles swap, a painted marking is erased, or an unpainted divider between two lanes is
        painted solid or dashed white.
        """
        for _ in range(self.config.marking_sequences):
            candidates = self._lanes(self._marking_candidate)
            if not candidates:
                break
            start = self._pick(candidates)
            side = self._pick(self._editable_sides(start))
            painting = start.mark(side).is_implicit
            transition = PAINT if painting else self._pick((RESTYLE, ERASE))
            paint = self._pick(PAINT_MARKS) if painting else SOLID_WHITE
            run = self._run(start, self.config.marking_run_length, self._marking_candidate)

            edited = []
            for ls in run:
                ls = self._elements[ls.id]
                old = ls.mark(side)
                if (painting and not self._paintable(ls, side)) or (not painting and old.is_implicit):
                    continue
                new = remark(old, transition, paint)
                self._set_mark(ls, side, new)
                self._sync_neighbor(ls, side, old, new)
                edited.append(ls.id)
            self._touched.update(ls.id for ls in run)
            self.stats.marking_runs.append(tuple(edited))


def remark(mark: LaneMarkType, transition: str, paint: LaneMarkType = SOLID_WHITE) -> LaneMarkType:
    """
    The marking after a transition; marks without a restyled counterpart are erased.

    :param paint: the mark an unpainted boundary receives. By default, solid white
    """
    if transition == PAINT:
        return paint
    if transition == RESTYLE and mark.mark in _RESTYLED:
        return LaneMarkType(_RESTYLED[mark.mark], mark.color)
    return NO_MARK


def perturb_rulebased(
    gt: MapScene, trajectory: Sequence[EgoPose], config: RuleBasedConfig = RuleBasedConfig(), seed: int = 0
) -> tuple[MapScene, ChangeSet]:
    """
    Rule-based prior along an ego trajectory.

    :param gt: the ground-truth map
    :param trajectory: ego poses; changes are only made within the trajectory buffer
    :param config: the generator parameters
    :param seed: RNG seed
    :return: the prior and the change set that turns it back into gt
    """
    return RuleBasedPerturber(gt, trajectory, config, seed).run()
