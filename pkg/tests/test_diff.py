from dataclasses import replace

import pytest

from map_delta.changes import (
    AtomicKind,
    ChangeSet,
    Deletion,
    GeometryChange,
    Insertion,
    MarkingChange,
)
from map_delta.codec import parse_map, serialize_map
from map_delta.diff import (
    apply_changeset,
    diff_maps,
    expand_reroutes,
    geometry_equal,
    invert_changeset,
    rerouted_ids,
    scrub_references,
)
from map_delta.errors import ConflictingChange, IdCollision, InconsistentInput, TargetMissing
from map_delta.model import SOLID_WHITE, MapScene
from tests.builders import DASHED_WHITE, chained, crossing, lane, scene


def _edited(s: MapScene, *elements, drop=()) -> MapScene:
    replaced = {e.id: e for e in elements}
    kept = [replaced.pop(e.id, e) for e in s.elements() if e.id not in drop]
    return s.with_elements([*kept, *replaced.values()])


def _kinds(cs: ChangeSet) -> list[tuple[int, str]]:
    return [(c.target_id, c.slot) for c in cs]


@pytest.fixture
def updated(road_scene):
    """Lane 2 shifted, lane 5 repainted, crossing removed, a fourth right segment appended."""
    moved = road_scene[2].with_geometry(road_scene[2].geometry.translated(0.0, 0.3))
    repainted = replace(road_scene[5], right_lane_mark_type=SOLID_WHITE)
    extension = lane(7, 60, 80, predecessors=(3,))
    tail = replace(road_scene[3], successors=(7,))
    return _edited(road_scene, moved, repainted, extension, tail, drop=(100,))


def test_diff_identical(road_scene):
    assert len(diff_maps(road_scene, road_scene)) == 0


def test_diff_ignores_change_status(road_scene):
    tagged = road_scene.with_elements(replace(e, is_modified=True, change_hist=("geometry",)) for e in road_scene.elements())
    assert len(diff_maps(road_scene, tagged)) == 0


def test_diff_tolerates_sub_millimeter_noise(road_scene):
    nudged = _edited(road_scene, road_scene[1].with_geometry(road_scene[1].geometry.translated(0.0004, 0.0)))
    assert len(diff_maps(road_scene, nudged)) == 0
    assert geometry_equal(road_scene[1].geometry, nudged[1].geometry)


def test_diff_maps(road_scene, updated):
    cs = diff_maps(road_scene, updated)

    assert cs.base_scene_id == "road"
    # the new link from 3 to 7 follows from the insertion and is not recorded
    assert _kinds(cs) == [(2, "geometry"), (5, "marking:right"), (7, "insertion"), (100, "deletion")]
    marking = cs.by_target()[5][0]
    assert marking.before == DASHED_WHITE
    assert marking.after == SOLID_WHITE


def test_apply_restores_gt(road_scene, updated):
    cs = diff_maps(road_scene, updated)
    applied = apply_changeset(road_scene, cs, record_history=False)
    assert applied == updated
    assert serialize_map(applied) == serialize_map(updated)


def test_apply_records_history(road_scene, updated):
    applied = apply_changeset(road_scene, diff_maps(road_scene, updated))
    assert applied[2].change_hist == ("geometry",)
    assert applied[5].change_hist == ("marking",)
    assert applied[7].change_hist == ("insertion",)
    assert applied[7].is_modified
    assert not applied[1].is_modified
    assert applied.without_change_status() == updated


def test_invert_restores_prior(road_scene, updated):
    cs = diff_maps(road_scene, updated)
    inverse = invert_changeset(cs, road_scene)
    restored = apply_changeset(apply_changeset(road_scene, cs), inverse, record_history=False)
    assert restored.without_change_status() == road_scene
    assert invert_changeset(inverse) == cs


def test_invert_checks_targets(road_scene, updated):
    cs = diff_maps(road_scene, updated)
    with pytest.raises(TargetMissing):
        # lane 2 is missing from the base
        invert_changeset(cs, road_scene.with_elements(e for e in road_scene.elements() if e.id != 2))


def test_deletion_scrubs_references(road_scene):
    cs = ChangeSet("road", frozenset({Deletion(2, road_scene[2]), Deletion(5, road_scene[5])}))
    applied = apply_changeset(road_scene, cs)

    assert 2 not in applied and 5 not in applied
    assert applied[1].successors == ()
    assert applied[3].predecessors == ()
    assert applied[6].predecessors == ()
    assert applied[1].left_neighbor_id == 4

    applied = apply_changeset(road_scene, ChangeSet("road", frozenset({Deletion(5, road_scene[5])})))
    assert applied[2].left_neighbor_id is None


def test_scrub_references():
    ls = lane(1, successors=(2, 3), predecessors=(4,), left_neighbor_id=5, right_neighbor_id=2)
    scrubbed = scrub_references(ls, {2, 5})
    assert scrubbed.successors == (3,)
    assert scrubbed.predecessors == (4,)
    assert scrubbed.left_neighbor_id is None
    assert scrubbed.right_neighbor_id is None
    assert scrub_references(ls, {42}) is ls
    kept = scrub_references(ls, {2, 5}, keep_neighbors=frozenset({5}))
    assert kept.successors == (3,)
    assert kept.left_neighbor_id == 5


def test_deletion_implies_neighbor_links(road_scene):
    gt = road_scene.with_elements(scrub_references(e, {2}) for e in road_scene.elements() if e.id != 2)
    cs = diff_maps(road_scene, gt)

    assert _kinds(cs) == [(2, "deletion")]
    assert apply_changeset(road_scene, cs, record_history=False) == gt


def test_neighbor_of_inserted_segment_is_recorded(road_scene):
    new = lane(7, 60, 80, predecessors=(3,), left_neighbor_id=6)
    gt = _edited(road_scene, new, replace(road_scene[3], successors=(7,)), replace(road_scene[6], right_neighbor_id=7))
    cs = diff_maps(road_scene, gt)

    assert _kinds(cs) == [(6, "connectivity:right_neighbor"), (7, "insertion")]
    assert apply_changeset(road_scene, cs, record_history=False) == gt


def test_connectivity_change(road_scene):
    gt = _edited(road_scene, replace(road_scene[3], left_neighbor_id=None), replace(road_scene[6], right_neighbor_id=None))
    cs = diff_maps(road_scene, gt)
    assert _kinds(cs) == [(3, "connectivity:left_neighbor"), (6, "connectivity:right_neighbor")]
    assert apply_changeset(road_scene, cs, record_history=False) == gt


def test_type_change(road_scene):
    gt = _edited(road_scene, replace(road_scene[1], lane_type="bus"))
    cs = diff_maps(road_scene, gt)
    assert [c.kind for c in cs] == [AtomicKind.TYPE]
    assert apply_changeset(road_scene, cs).lane_segments[1].change_hist == ("type",)


@pytest.mark.parametrize(
    "gt",
    [
        # a lane segment turned into a crossing
        lambda s: _edited(s, crossing(1), drop=(1,)),
        lambda s: _edited(s, replace(s[1], is_intersection=True)),
    ],
)
def test_diff_inconsistent_input(road_scene, gt):
    with pytest.raises(InconsistentInput):
        diff_maps(road_scene, gt(road_scene))


def test_apply_errors(road_scene):
    g = road_scene[1].geometry
    moved = g.translated(0.0, 1.0)

    with pytest.raises(TargetMissing):
        apply_changeset(road_scene, ChangeSet("road", frozenset({GeometryChange(42, g, moved)})))
    with pytest.raises(IdCollision):
        apply_changeset(road_scene, ChangeSet("road", frozenset({Insertion(1, lane(1))})))
    with pytest.raises(ConflictingChange):
        # 'before' does not match lane 2
        apply_changeset(road_scene, ChangeSet("road", frozenset({GeometryChange(2, g, moved)})))
    with pytest.raises(ConflictingChange):
        apply_changeset(road_scene, ChangeSet("road", frozenset({MarkingChange(1, "left", SOLID_WHITE, DASHED_WHITE)})))
    with pytest.raises(ConflictingChange):
        apply_changeset(
            road_scene,
            ChangeSet("road", frozenset({Deletion(1, road_scene[1]), GeometryChange(1, g, moved)})),
        )
    with pytest.raises(TargetMissing):
        apply_changeset(road_scene, ChangeSet("road", frozenset({Insertion(7, lane(7, successors=(42,)))})))
    with pytest.raises(InconsistentInput):
        apply_changeset(road_scene, ChangeSet("other", frozenset()))


def test_apply_leaves_scene_untouched(road_scene):
    before = serialize_map(road_scene)
    apply_changeset(road_scene, ChangeSet("road", frozenset({Deletion(2, road_scene[2])})))
    assert serialize_map(road_scene) == before


def _junction(rerouted: bool) -> MapScene:
    """An intersection segment 3 between 1 and 2; when rerouted it ends in 4 instead and bends left."""
    a = lane(1, 0, 20)
    b = lane(2, 40, 60)
    c = lane(4, 40, 60, 10)
    connector = lane(3, 20, 40, is_intersection=True)
    if rerouted:
        connector = replace(connector, left_lane_boundary=connector.left_lane_boundary.translated(0.0, 2.0))
        elements = [*chained(a, connector, c), b]
    else:
        elements = [*chained(a, connector, b), c]
    return scene(*elements, scene_id="junction")


def test_reroute():
    prior, gt = _junction(False), _junction(True)
    cs = diff_maps(prior, gt)

    assert rerouted_ids(cs) == [3]
    assert cs.by_target()[3][0].tags == ("geometry", "reroute")
    assert apply_changeset(prior, cs, record_history=False) == gt

    expanded = expand_reroutes(cs, prior, gt)
    assert rerouted_ids(expanded) == []
    assert [(c.target_id, c.reroute) for c in expanded.deletions] == [(3, True)]
    assert [(c.target_id, c.reroute) for c in expanded.insertions] == [(5, True)]

    renamed = apply_changeset(prior, expanded, record_history=False)
    assert 3 not in renamed
    assert renamed[5].predecessors == (1,)
    assert renamed[5].successors == (4,)


def test_expand_without_reroutes(road_scene, updated):
    cs = diff_maps(road_scene, updated)
    assert expand_reroutes(cs, road_scene, updated) is cs


def test_serialized_diff_applies(road_scene, updated):
    prior = parse_map(serialize_map(road_scene))
    assert apply_changeset(prior, diff_maps(prior, updated), record_history=False) == updated
