"""
Macro classification and canonical form of change sets.

A change set is canonical when it is the unique representation of a map update: insertions and
deletions appear only where the lane graph requires them, ambiguous insertions start on the
driving-direction right, and reroutes keep the topological function of the rerouted segment.
"""
from __future__ import annotations

import logging
from collections import defaultdict
from typing import Iterable, Optional, Union

import numpy as np
from shapely.geometry import Polygon

from .changes import (
    AtomicChange,
    AtomicKind,
    ChangeSet,
    ConnectivityChange,
    Deletion,
    GeometryChange,
    Insertion,
    MacroKind,
    MacroModification,
    MarkingChange,
    TypeChange,
    is_reroute_pair,
)
from .diff import GEOMETRY_TOLERANCE, SAMPLE_POINTS
from .errors import InconsistentInput
from .lane_graph import topological_function, topology_changed
from .model import ElementKind, LaneSegment, LaneType, MapElement, MapScene
from .utils import lateral_offsets, max_deviation, mean_lateral_offset
from .validate import ERROR, WARNING, ValidationReport

logger = logging.getLogger(__name__)

TWIN_DISTANCE = 0.1
OVERLAP_AREA = 1e-6

# rule names
REPLACEMENT = "replacement without road graph change"
RIGHT_HAND = "right-hand insertion"
REROUTE_FUNCTION = "function-preserving reroute"
EXCLUSIVITY = "exclusive insertion/deletion"
DUPLICATE = "one change per kind"
OUTSIDE_MACRO_SPACE = "outside the macro space"

FRAME_CLASSES = ("insertion", "deletion", "geometry", "marking")
EXTRA_FRAME_CLASSES = ("type", "connectivity")


def _lane_changes(cs: ChangeSet, cls) -> list:
    return [c for c in cs if isinstance(c, cls) and c.element.kind is ElementKind.LANE_SEGMENT]


def _check_references(cs: ChangeSet, prior: MapScene, gt: MapScene):
    known = prior.ids() | gt.ids()
    missing = sorted(cs.targets() - known)
    if missing:
        raise InconsistentInput(f"change set references ids {missing} found in neither scene")


def classify_macro(cs: ChangeSet, prior: MapScene, gt: MapScene) -> set[MacroModification]:
    """
    Map a change set onto the macro-modifications it produces, following MAPPING_MATRIX.

    Lane segment insertions and deletions produce shape, appearance and function only together with
    a lane graph topology change. Pedestrian crossing insertions and deletions produce appearance.
    The lane number delta counts lane segment insertions minus deletions, leaving out reroute pairs.

    :param cs: the change set, normally diff_maps(prior, gt)
    :param prior: the stale map
    :param gt: the up-to-date map
    :return: a set of MacroModification
    """
    _check_references(cs, prior, gt)
    if not cs:
        return set()

    topo = topology_changed(prior, gt)
    kinds = {c.kind for c in cs}
    lane_insertions = _lane_changes(cs, Insertion)
    lane_deletions = _lane_changes(cs, Deletion)
    crossing_ins_del = [c for c in [*cs.insertions, *cs.deletions] if c.element.kind is ElementKind.PEDESTRIAN_CROSSING]
    starred = topo and bool(lane_insertions or lane_deletions)

    macros = set()
    if AtomicKind.GEOMETRY in kinds or starred:
        macros.add(MacroModification(MacroKind.SHAPE))
    if AtomicKind.MARKING in kinds or starred or crossing_ins_del:
        macros.add(MacroModification(MacroKind.APPEARANCE))
    if AtomicKind.TYPE in kinds or starred:
        macros.add(MacroModification(MacroKind.FUNCTION))
    if topo and (lane_insertions or lane_deletions or AtomicKind.CONNECTIVITY in kinds):
        macros.add(MacroModification(MacroKind.LANE_GRAPH))

    delta = sum(1 for c in lane_insertions if not c.reroute) - sum(1 for c in lane_deletions if not c.reroute)
    if delta:
        macros.add(MacroModification(MacroKind.LANE_NUMBER, delta))
        rerouted = any(getattr(c, "reroute", False) for c in cs)
        if rerouted:
            logger.warning(
                f"'{cs.base_scene_id}': reroute coincides with a lane count change of {delta:+d}; "
                f"the reroute does not count toward lane_number"
            )

    logger.debug(f"macros of '{cs.base_scene_id}': {sorted(str(m) for m in macros)}")
    return macros


# ---------------------------------------------------------------------------- canonical form


def _signature(ls: LaneSegment, persisting: set[int]) -> tuple[tuple[int, ...], tuple[int, ...]]:
    return (
        tuple(i for i in ls.predecessors if i in persisting),
        tuple(i for i in ls.successors if i in persisting),
    )


def _polygon(e: MapElement) -> Polygon:
    poly = Polygon(e.geometry.ring())
    return poly if poly.is_valid else poly.buffer(0)


def _adjacent(a: LaneSegment, b: LaneSegment) -> bool:
    if b.id in (a.left_neighbor_id, a.right_neighbor_id) or a.id in (b.left_neighbor_id, b.right_neighbor_id):
        return True
    return _polygon(a).distance(_polygon(b)) <= TWIN_DISTANCE


def validate_canonical(cs: ChangeSet, prior: MapScene, gt: MapScene) -> ValidationReport:
    """
    Check that a change set is the canonical representation of the update from prior to gt.

    Reported errors:
      1. a deleted and an inserted lane segment with the same persisting predecessors/successors
         and overlapping lane areas, where an in-place edit would describe the update;
      2. an inserted lane segment to the left of a geometry-edited twin it could have been
         swapped with, instead of on the driving-direction right;
      3. a reroute whose entry ordinal or turn class differs between prior and gt;
      4. an inserted or deleted element that carries further changes, or an element changed twice
         in the same slot.
    Connectivity edits on successors/predecessors that leave the lane graph topology unchanged are
    reported as warnings.

    :param cs: the change set
    :param prior: the stale map
    :param gt: the up-to-date map
    :return: a ValidationReport
    """
    report = ValidationReport()

    for target, changes in cs.by_target().items():
        if is_reroute_pair(changes):
            continue
        slots = [c.slot for c in changes]
        for slot in sorted({s for s in slots if slots.count(s) > 1}):
            report.add(target, DUPLICATE, f"more than one '{slot}' change")
        exclusive = [c for c in changes if c.kind in (AtomicKind.INSERTION, AtomicKind.DELETION)]
        if exclusive and len(changes) > 1:
            others = sorted({c.kind.value for c in changes if c is not exclusive[0]})
            report.add(target, EXCLUSIVITY, f"{exclusive[0].kind.value} carries co-changes {others}")

    persisting = prior.ids() & gt.ids()
    insertions = [c for c in _lane_changes(cs, Insertion) if not c.reroute]
    deletions = [c for c in _lane_changes(cs, Deletion) if not c.reroute]

    for d in deletions:
        sig = _signature(d.element, persisting)
        for i in insertions:
            if _signature(i.element, persisting) != sig:
                continue
            if _polygon(d.element).intersection(_polygon(i.element)).area > OVERLAP_AREA:
                report.add(
                    i.target_id,
                    REPLACEMENT,
                    f"deletion of {d.target_id} and insertion of {i.target_id} replace a lane the road graph keeps",
                )

    edited = {c.target_id for c in cs.of_kind(AtomicKind.GEOMETRY)}
    for i in insertions:
        new = i.element
        sig = _signature(new, persisting)
        for n in sorted(edited & set(gt.lane_segments) & set(prior.lane_segments)):
            twin = gt.lane_segments[n]
            if _signature(twin, persisting) != sig or not _adjacent(new, twin):
                continue
            if mean_lateral_offset(new.centerline, twin.centerline) > 0.0:
                report.add(
                    i.target_id,
                    RIGHT_HAND,
                    f"inserted segment lies left of edited segment {n}; the insertion should start on the right",
                )

    for c in cs.of_kind(AtomicKind.GEOMETRY):
        if not c.reroute:
            continue
        before = prior.lane_segments.get(c.target_id)
        after = gt.lane_segments.get(c.target_id)
        if before is None or after is None:
            continue
        f_before, f_after = topological_function(before, prior), topological_function(after, gt)
        if f_before != f_after:
            report.add(c.target_id, REROUTE_FUNCTION, f"topological function changes from {f_before} to {f_after}")

    links = [c for c in cs.of_kind(AtomicKind.CONNECTIVITY) if c.field in ("successors", "predecessors")]
    if links and not topology_changed(prior, gt):
        for c in links:
            report.add(c.target_id, OUTSIDE_MACRO_SPACE, f"{c.field} edit leaves the lane graph unchanged", level=WARNING)

    if report.violations:
        logger.info(f"'{cs.base_scene_id}': {len(report.errors)} canonical-form errors, {len(report.warnings)} warnings")
    return report


# ---------------------------------------------------------------------------- labels


def frame_labels(elements: Union[MapScene, Iterable], *, include_extra: bool = False) -> dict[str, bool]:
    """
    Frame-level change labels: a class is set iff at least one element of the patch carries it.

    :param elements: a patch scene, or any iterable of objects with a `change_hist`
    :param include_extra: By default False. If True, type and connectivity labels are added
    :return: a dict from change class to bool
    """
    if isinstance(elements, MapScene):
        elements = elements.elements()
    classes = FRAME_CLASSES + (EXTRA_FRAME_CLASSES if include_extra else ())
    seen = set()
    for e in elements:
        seen.update(e.change_hist)
    return {c: c in seen for c in classes}


def _boundary_sublabel(before, after, side: str) -> Optional[str]:
    if max_deviation(before, after, SAMPLE_POINTS) <= GEOMETRY_TOLERANCE:
        return None
    offsets = lateral_offsets(after, before, SAMPLE_POINTS)
    # a rigid sideways move keeps the border's shape and only changes the width
    if np.ptp(offsets) <= GEOMETRY_TOLERANCE and abs(float(np.mean(offsets))) > GEOMETRY_TOLERANCE:
        return f"width:{side}"
    return f"border_shape:{side}"


def sublabels(change: AtomicChange) -> tuple[str, ...]:
    """
    Finer-grained annotation below the atomic kind.

    Marking changes give `color:<side>` and/or `mark:<side>`; geometry changes give `width:<side>`
    for a boundary moved sideways and `border_shape:<side>` otherwise; type changes give
    `restriction` (vehicle to another type), `opening` (another type to vehicle) or `conversion`.
    Connectivity changes give their field. Insertions and deletions have no finer level.
    """
    if isinstance(change, MarkingChange):
        labels = []
        if change.before.color != change.after.color:
            labels.append(f"color:{change.side}")
        if change.before.mark != change.after.mark:
            labels.append(f"mark:{change.side}")
        return tuple(labels)
    if isinstance(change, GeometryChange):
        labels = [
            _boundary_sublabel(change.before.left_lane_boundary, change.after.left_lane_boundary, "left"),
            _boundary_sublabel(change.before.right_lane_boundary, change.after.right_lane_boundary, "right"),
        ]
        return tuple(label for label in labels if label is not None)
    if isinstance(change, TypeChange):
        if change.before is LaneType.VEHICLE:
            return ("restriction",)
        if change.after is LaneType.VEHICLE:
            return ("opening",)
        return ("conversion",)
    if isinstance(change, ConnectivityChange):
        return (change.field,)
    return ()


def sublabel_counts(cs: ChangeSet) -> dict[str, int]:
    counts = defaultdict(int)
    for c in cs:
        for label in sublabels(c):
            counts[f"{c.kind.value}/{label}"] += 1
    return dict(sorted(counts.items()))
