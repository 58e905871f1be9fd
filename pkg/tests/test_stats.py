import json
from dataclasses import replace

import pytest

from map_delta.changes import ChangeSet, TypeChange
from map_delta.codec import dump_poses, serialize_map
from map_delta.errors import SchemaError
from map_delta.stats import (
    ROWS,
    StatsRecord,
    compute_stats,
    count_entry,
    count_scene,
    load_manifest,
    merge_counts,
)
from tests.builders import crossing, road


def _with_new_crossing():
    prior = road()
    return prior, prior.with_elements([*prior.elements(), crossing(101, x=50.0)])


def _retyped():
    prior = road()
    moved = prior[1].with_geometry(prior[1].geometry.translated(0.0, 0.5))
    bus = replace(prior[2], lane_type="bus")
    gt = prior.with_elements([e for e in prior.elements() if e.id not in (1, 2, 100)] + [moved, bus])
    return prior, gt


def test_count_scene_insertion_frames(trajectory):
    prior, gt = _with_new_crossing()
    counts = count_scene(StatsRecord("val", prior, gt, poses=tuple(trajectory)), extent=20.0)

    assert counts["total"] == {"global": 1, "frame": 7, "element": 8}
    # the new crossing at x = 50 is seen from x = 40, 50 and 60
    assert counts["pc insertion"] == {"global": 1, "frame": 3, "element": 1}
    assert counts["of which changed"] == {"global": 1, "frame": 3, "element": 1}
    assert counts["ls geometry"] == {"global": 0, "frame": 0, "element": 0}


def test_count_scene_rows():
    prior, gt = _retyped()
    counts = count_scene(StatsRecord("val", prior, gt))

    assert counts["ls geometry"]["element"] == 1
    assert counts["ls type"]["element"] == 1
    assert counts["pc deletion"]["element"] == 1
    assert counts["of which changed"]["element"] == 3
    assert counts["ls insertion"]["global"] == 0
    # no poses, no frames
    assert all(level["frame"] == 0 for level in counts.values())


def test_count_scene_unknown_target():
    prior = road()
    cs = ChangeSet("road", frozenset({TypeChange(42, "vehicle", "bus")}))
    with pytest.raises(SchemaError):
        count_scene(StatsRecord("val", prior, prior, cs))


def test_compute_stats_splits(trajectory):
    records = [
        StatsRecord("train", *_with_new_crossing(), poses=tuple(trajectory)),
        StatsRecord("val", *_retyped()),
        StatsRecord("train", *_retyped()),
    ]
    table = compute_stats(records)

    assert table.splits == ["train", "val"]
    assert table.get("train", "total", "global") == 2
    assert table.get("train", "pc insertion", "element") == 1
    assert table.get("train", "pc deletion", "element") == 1
    assert table.get("val", "ls type", "global") == 1
    assert table.get("test", "total", "global") == 0

    d = table.to_dict()
    assert d["rows"] == list(ROWS)
    assert d["levels"] == ["global", "frame", "element"]
    assert set(d["splits"]) == {"train", "val"}


def test_compute_stats_empty():
    table = compute_stats([])
    assert table.splits == []
    assert len(table.format().splitlines()) == 1 + len(ROWS)


def test_stats_table_format():
    table = compute_stats([StatsRecord("val", *_retyped())])
    lines = table.format().splitlines()

    assert lines[0].split() == ["val/global", "val/frame", "val/element"]
    assert [line[: len(row)] for line, row in zip(lines[1:], ROWS)] == list(ROWS)
    assert lines[1].split()[-3:] == ["1", "0", "7"]


def _write_corpus(tmp_path, trajectory):
    prior, gt = _with_new_crossing()
    (tmp_path / "scenes").mkdir()
    (tmp_path / "scenes" / "prior.json").write_bytes(serialize_map(prior))
    (tmp_path / "scenes" / "gt.json").write_bytes(serialize_map(gt))
    (tmp_path / "scenes" / "poses.json").write_bytes(dump_poses(trajectory))
    manifest = [
        {"split": "val", "prior": "scenes/prior.json", "gt": "scenes/gt.json", "poses": "scenes/poses.json"},
        {"split": "test", "prior": "scenes/prior.json", "gt": "scenes/prior.json"},
    ]
    path = tmp_path / "manifest.json"
    path.write_text(json.dumps(manifest))
    return path


def test_manifest_counts(tmp_path, trajectory):
    entries = load_manifest(_write_corpus(tmp_path, trajectory))
    assert [e["split"] for e in entries] == ["val", "test"]
    assert entries[0]["gt"] == str(tmp_path / "scenes" / "gt.json")

    table = merge_counts([count_entry(e) for e in entries])
    expected = compute_stats([StatsRecord("val", *_with_new_crossing(), poses=tuple(trajectory))])
    assert table.counts["val"] == expected.counts["val"]
    assert table.get("test", "of which changed", "element") == 0
    assert table.get("test", "total", "element") == 7


@pytest.mark.parametrize(
    "content",
    [
        "{not json",
        json.dumps({"split": "val"}),
        json.dumps(["prior.json"]),
        json.dumps([{"split": "val", "prior": "a.json"}]),
        json.dumps([{"split": "val", "prior": "a.json", "gt": "b.json", "city": "PIT"}]),
    ],
)
def test_load_manifest_errors(tmp_path, content):
    path = tmp_path / "manifest.json"
    path.write_text(content)
    with pytest.raises(SchemaError):
        load_manifest(path)
