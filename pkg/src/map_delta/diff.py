"""
Diffing two scenes into atomic changes and applying change sets to scenes.

Scenes share ids: the same id in the prior and the ground truth denotes the same element.
Connectivity that follows from insertions and deletions is implied and never recorded: applying
a deletion scrubs every reference to the deleted id, and applying an insertion adds the inserted
segment to the successor/predecessor lists it is linked from. Neighbor references to an inserted
segment are not implied and are recorded on the persisting segment.

An intersection segment whose links and geometry change is a reroute. It stays one geometry change
while it keeps its topological function; otherwise it is replaced by a reroute deletion and a
reroute insertion of the same id.
"""
from __future__ import annotations

import logging
from collections import Counter
from dataclasses import replace
from typing import Optional

from .changes import (
    AtomicChange,
    AtomicKind,
    ChangeSet,
    ConnectivityChange,
    Deletion,
    GeometryChange,
    Insertion,
    MarkingChange,
    TypeChange,
)
from .errors import ConflictingChange, IdCollision, InconsistentInput, TargetMissing
from .lane_graph import topological_function
from .model import ElementGeometry, LaneSegment, MapElement, MapScene, with_change_tags
from .utils import max_deviation

logger = logging.getLogger(__name__)

GEOMETRY_TOLERANCE = 1e-3
SAMPLE_POINTS = 10

_NEIGHBOR_ATTRS = {"left_neighbor": "left_neighbor_id", "right_neighbor": "right_neighbor_id"}


def geometry_equal(a: ElementGeometry, b: ElementGeometry, tol: float = GEOMETRY_TOLERANCE) -> bool:
    """Whether two geometries count as the same: identical, or within `tol` after 10-point resampling."""
    if a == b:
        return True
    return all(max_deviation(p, q, SAMPLE_POINTS) <= tol for p, q in zip(a.polylines(), b.polylines()))


def connectivity_value(ls: LaneSegment, field: str) -> tuple[int, ...]:
    if field in _NEIGHBOR_ATTRS:
        v = getattr(ls, _NEIGHBOR_ATTRS[field])
        return () if v is None else (v,)
    return getattr(ls, field)


def _with_connectivity(ls: LaneSegment, field: str, value: tuple[int, ...]) -> LaneSegment:
    if field in _NEIGHBOR_ATTRS:
        return replace(ls, **{_NEIGHBOR_ATTRS[field]: value[0] if value else None})
    return replace(ls, **{field: value})


def _content(e: MapElement) -> MapElement:
    return replace(e, is_modified=False, change_hist=())


# ---------------------------------------------------------------------------- diff


def _implied_links(
    ls: LaneSegment, field: str, deleted: set[int], inserted: dict[int, LaneSegment]
) -> tuple[int, ...]:
    """Successors or predecessors of a persisting segment once deletions and insertions are applied."""
    kept = {i for i in getattr(ls, field) if i not in deleted}
    back = "predecessors" if field == "successors" else "successors"
    kept |= {i for i, new in inserted.items() if ls.id in getattr(new, back)}
    return tuple(sorted(kept))


def _implied_neighbor(ls: LaneSegment, field: str, gone: set[int]) -> tuple[int, ...]:
    return tuple(i for i in connectivity_value(ls, field) if i not in gone)


def _is_reroute(a: LaneSegment, b: LaneSegment) -> bool:
    links_changed = a.successors != b.successors or a.predecessors != b.predecessors
    return a.is_intersection and b.is_intersection and links_changed and not geometry_equal(a.geometry, b.geometry)


def _diff_lane_segment(
    a: LaneSegment, b: LaneSegment, deleted: set[int], inserted: dict[int, LaneSegment], gone: set[int]
) -> list[AtomicChange]:
    changes: list[AtomicChange] = []

    if not geometry_equal(a.geometry, b.geometry):
        changes.append(GeometryChange(a.id, a.geometry, b.geometry, reroute=_is_reroute(a, b)))

    for side in ("left", "right"):
        if a.mark(side) != b.mark(side):
            changes.append(MarkingChange(a.id, side, a.mark(side), b.mark(side)))

    if a.lane_type != b.lane_type:
        changes.append(TypeChange(a.id, a.lane_type, b.lane_type))

    for field in ("successors", "predecessors"):
        if _implied_links(a, field, deleted, inserted) != getattr(b, field):
            changes.append(ConnectivityChange(a.id, field, getattr(a, field), getattr(b, field)))
    for field in _NEIGHBOR_ATTRS:
        if _implied_neighbor(a, field, gone) != connectivity_value(b, field):
            changes.append(ConnectivityChange(a.id, field, connectivity_value(a, field), connectivity_value(b, field)))

    return changes


def diff_maps(prior: MapScene, gt: MapScene) -> ChangeSet:
    """
    Compute the canonical change set that turns the prior into the ground truth.

    Ids present in both scenes give field-level changes, ids only in the ground truth give
    insertions, and ids only in the prior give deletions. A reroute that changes the segment's
    topological function gives a reroute deletion + insertion pair on the segment's id. Change
    bookkeeping (is_modified, change_hist) and unknown extra fields are not compared.

    :param prior: the stale map
    :param gt: the up-to-date map
    :return: a ChangeSet based on the prior's scene id
    """
    for i in sorted(prior.ids() & gt.ids()):
        if prior[i].kind is not gt[i].kind:
            raise InconsistentInput(f"element {i} is a {prior[i].kind.value} in the prior and a {gt[i].kind.value} in the gt")
        if isinstance(prior[i], LaneSegment) and prior[i].is_intersection != gt[i].is_intersection:
            # no atomic change kind covers this field
            raise InconsistentInput(f"is_intersection of lane segment {i} differs between prior and gt")

    replaced = {
        i
        for i in prior.lane_segments.keys() & gt.lane_segments.keys()
        if _is_reroute(prior[i], gt[i]) and topological_function(prior[i], prior) != topological_function(gt[i], gt)
    }
    gone = prior.ids() - gt.ids()
    deleted = gone | replaced
    inserted_lanes = {i: ls for i, ls in gt.lane_segments.items() if i not in prior.lane_segments or i in replaced}

    changes: list[AtomicChange] = []
    for i in sorted(prior.ids() | gt.ids()):
        a, b = prior.get(i), gt.get(i)
        if a is None:
            changes.append(Insertion(i, b))
        elif b is None:
            changes.append(Deletion(i, a))
        elif i in replaced:
            logger.debug(f"reroute of {i} changes its topological function; replacing the segment")
            changes.extend([Deletion(i, a, reroute=True), Insertion(i, b, reroute=True)])
        elif isinstance(a, LaneSegment):
            changes.extend(_diff_lane_segment(a, b, deleted, inserted_lanes, gone))
        elif not geometry_equal(a.geometry, b.geometry):
            changes.append(GeometryChange(i, a.geometry, b.geometry))

    cs = ChangeSet(prior.scene_id, frozenset(changes))
    counts = Counter(c.kind.value for c in changes)
    logger.info(f"diff of '{prior.scene_id}': {len(cs)} changes {dict(sorted(counts.items()))}")
    return cs


# ---------------------------------------------------------------------------- apply


def _check_change(scene: MapScene, c: AtomicChange, replaced: set[int]):
    if isinstance(c, Insertion):
        if c.target_id in scene and c.target_id not in replaced:
            raise IdCollision(f"insertion of element {c.target_id} reuses an existing id")
        if c.reroute and not (isinstance(c.element, LaneSegment) and c.element.is_intersection):
            raise ConflictingChange(f"reroute insertion {c.target_id} is not an intersection lane segment")
        return

    current = scene.get(c.target_id)
    if current is None:
        raise TargetMissing(f"{c.kind.value} change targets missing element {c.target_id}")

    if isinstance(c, Deletion):
        if _content(current) != _content(c.element):
            raise ConflictingChange(f"deletion payload of {c.target_id} does not match the scene")
        return
    if isinstance(c, GeometryChange):
        if c.reroute and not (isinstance(current, LaneSegment) and current.is_intersection):
            raise ConflictingChange(f"reroute on {c.target_id}, which is not an intersection lane segment")
        if current.geometry != c.before:
            raise ConflictingChange(f"geometry of {c.target_id} does not match the change's 'before'")
        return
    if not isinstance(current, LaneSegment):
        raise ConflictingChange(f"{c.kind.value} change targets pedestrian crossing {c.target_id}")
    if isinstance(c, MarkingChange):
        actual = current.mark(c.side)
    elif isinstance(c, TypeChange):
        actual = current.lane_type
    else:
        actual = connectivity_value(current, c.field)
    if actual != c.before:
        raise ConflictingChange(f"{c.slot} of {c.target_id} is {actual}, not the change's 'before' {c.before}")


def _apply_field_change(e: MapElement, c: AtomicChange) -> MapElement:
    if isinstance(c, GeometryChange):
        return e.with_geometry(c.after)
    if isinstance(c, MarkingChange):
        return replace(e, **{f"{c.side}_lane_mark_type": c.after})
    if isinstance(c, TypeChange):
        return replace(e, lane_type=c.after)
    return _with_connectivity(e, c.field, c.after)


def scrub_references(ls: LaneSegment, gone: set[int], *, keep_neighbors: frozenset[int] = frozenset()) -> LaneSegment:
    """
    Drop every successor, predecessor and neighbor reference to the ids in `gone`.

    :param keep_neighbors: ids in `gone` whose neighbor references stay, because they are inserted again
    """
    if not any(ref in gone for _, ref in ls.references()):
        return ls
    dropped = gone - keep_neighbors
    return replace(
        ls,
        successors=tuple(i for i in ls.successors if i not in gone),
        predecessors=tuple(i for i in ls.predecessors if i not in gone),
        left_neighbor_id=None if ls.left_neighbor_id in dropped else ls.left_neighbor_id,
        right_neighbor_id=None if ls.right_neighbor_id in dropped else ls.right_neighbor_id,
    )


def apply_changeset(scene: MapScene, cs: ChangeSet, *, record_history: bool = True) -> MapScene:
    """
    Apply a change set to a scene.

    Every change is checked against the scene before anything is applied. Then deletions are
    removed together with all references to them, insertions are added and linked from their
    successors/predecessors, and field changes set their 'after' values. A reroute pair on one id
    replaces the segment and keeps neighbor references to it.

    :param scene: the base scene; its id must equal cs.base_scene_id
    :param cs: the change set
    :param record_history: By default True, appending the applied change kinds to change_hist and
                    setting is_modified on every touched element
    :return: a new scene with the same scene id
    :raise TargetMissing: a non-insertion change targets an id absent from the scene
    :raise IdCollision: an insertion reuses an existing id
    :raise ConflictingChange: the set violates exclusivity, or a 'before' value does not match
    :raise InconsistentInput: the change set was computed for another scene
    """
    if cs.base_scene_id != scene.scene_id:
        raise InconsistentInput(f"change set for '{cs.base_scene_id}' cannot be applied to '{scene.scene_id}'")
    conflicts = cs.conflicts()
    if conflicts:
        raise ConflictingChange("; ".join(conflicts))
    replaced = cs.replaced()
    for c in cs:
        _check_change(scene, c, replaced)

    elements = {e.id: e for e in scene.elements()}

    gone = {c.target_id for c in cs.deletions}
    for i in gone:
        del elements[i]
    for i, e in elements.items():
        if isinstance(e, LaneSegment):
            elements[i] = scrub_references(e, gone, keep_neighbors=frozenset(replaced))

    insertions = cs.insertions
    for c in insertions:
        elements[c.target_id] = c.element
    for c in insertions:
        new = c.element
        if not isinstance(new, LaneSegment):
            continue
        for s in new.successors:
            if s not in elements:
                raise TargetMissing(f"inserted segment {new.id} links to missing successor {s}")
            elements[s] = replace(elements[s], predecessors=elements[s].predecessors + (new.id,))
        for p in new.predecessors:
            if p not in elements:
                raise TargetMissing(f"inserted segment {new.id} links to missing predecessor {p}")
            elements[p] = replace(elements[p], successors=elements[p].successors + (new.id,))

    for c in cs.of_kind(AtomicKind.GEOMETRY, AtomicKind.MARKING, AtomicKind.TYPE, AtomicKind.CONNECTIVITY):
        elements[c.target_id] = _apply_field_change(elements[c.target_id], c)

    if record_history:
        for c in cs:
            if c.target_id in elements and not (isinstance(c, Deletion) and c.target_id in replaced):
                elements[c.target_id] = with_change_tags(elements[c.target_id], c.tags)

    logger.debug(f"applied {len(cs)} changes to '{scene.scene_id}'")
    return scene.with_elements(elements.values())


# ---------------------------------------------------------------------------- invert and expand


def invert_changeset(cs: ChangeSet, base: Optional[MapScene] = None) -> ChangeSet:
    """
    Invert a change set: insertions become deletions and vice versa, before/after swap on field changes.
    For every base it applies to, apply(invert(cs), apply(cs, base)) restores base.

    :param cs: the change set to invert
    :param base: optional scene the change set applies to. When given, every non-insertion target
                    must exist in it
    :return: the inverse change set, based on the same scene id
    """
    if base is not None:
        for c in cs:
            if not isinstance(c, Insertion) and c.target_id not in base:
                raise TargetMissing(f"{c.kind.value} change targets element {c.target_id}, absent from '{base.scene_id}'")
    return cs.inverted()


def _renamed(scene: MapScene, renames: dict[int, int]) -> MapScene:
    def rename(i: Optional[int]) -> Optional[int]:
        return renames.get(i, i) if i is not None else None

    def rewrite(e: MapElement) -> MapElement:
        e = replace(e, id=rename(e.id))
        if isinstance(e, LaneSegment):
            e = replace(
                e,
                successors=tuple(map(rename, e.successors)),
                predecessors=tuple(map(rename, e.predecessors)),
                left_neighbor_id=rename(e.left_neighbor_id),
                right_neighbor_id=rename(e.right_neighbor_id),
            )
        return e

    return scene.with_elements(rewrite(e) for e in scene.elements())


def rerouted_ids(cs: ChangeSet) -> list[int]:
    return [c.target_id for c in cs.of_kind(AtomicKind.GEOMETRY) if c.reroute]


def expand_reroutes(cs: ChangeSet, prior: MapScene, gt: MapScene) -> ChangeSet:
    """
    Turn every reroute-flagged geometry change back into a deletion + insertion pair.

    The inserted segment receives a fresh id, so the expanded set turns the prior into the ground
    truth with each rerouted segment renamed. Both halves of a pair are flagged reroute=True.

    :param cs: a change set between prior and gt, typically diff_maps(prior, gt)
    :param prior: the stale map
    :param gt: the up-to-date map
    :return: the expanded change set
    """
    targets = rerouted_ids(cs)
    if not targets:
        return cs

    fresh = max(prior.ids() | gt.ids(), default=0) + 1
    renames = {t: fresh + k for k, t in enumerate(targets)}
    expanded = diff_maps(prior, _renamed(gt, renames))

    paired = set(renames) | set(renames.values())
    changes = [
        replace(c, reroute=True) if isinstance(c, (Insertion, Deletion)) and c.target_id in paired else c
        for c in expanded
    ]
    logger.debug(f"expanded reroutes {targets} into segments {sorted(renames.values())}")
    return ChangeSet(cs.base_scene_id, frozenset(changes))
