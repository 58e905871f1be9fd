"""
Dataset statistics: how many scenes, frames and elements carry each kind of change.
"""
from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterable, Optional, Sequence, Union

from .changes import AtomicChange, ChangeSet, Deletion, GeometryChange, Insertion, MarkingChange, TypeChange
from .codec import load_poses, parse_changeset, parse_map
from .diff import diff_maps
from .errors import SchemaError
from .model import EgoPose, ElementKind, MapScene
from .patch import PATCH_EXTENT, visible_ids

logger = logging.getLogger(__name__)

TOTAL = "total"
CHANGED = "of which changed"
ROWS = (
    TOTAL,
    CHANGED,
    "ls geometry",
    "ls mark",
    "ls insertion",
    "ls deletion",
    "ls topology",
    "ls type",
    "pc geometry",
    "pc insertion",
    "pc deletion",
)
LEVELS = ("global", "frame", "element")

MANIFEST_FIELDS = ("split", "prior", "gt", "changes", "poses")


def change_category(change: AtomicChange, kind: ElementKind) -> Optional[str]:
    """
    The statistics row of a change. Rerouted segments count as topology changes; connectivity
    changes have no row of their own and only count as changed.
    """
    prefix = "ls" if kind is ElementKind.LANE_SEGMENT else "pc"
    if getattr(change, "reroute", False):
        return "ls topology"
    if isinstance(change, GeometryChange):
        return f"{prefix} geometry"
    if isinstance(change, Insertion):
        return f"{prefix} insertion"
    if isinstance(change, Deletion):
        return f"{prefix} deletion"
    if isinstance(change, MarkingChange):
        return "ls mark"
    if isinstance(change, TypeChange):
        return "ls type"
    return None


@dataclass(frozen=True)
class StatsRecord:
    split: str
    prior: MapScene
    gt: MapScene
    changes: Optional[ChangeSet] = None
    poses: tuple[EgoPose, ...] = ()


def count_scene(record: StatsRecord, extent: float = PATCH_EXTENT) -> dict[str, dict[str, int]]:
    """
    Counts of one scene: per row, whether the scene has such a change (global), in how many
    frames such a changed element is visible (frame) and how many elements have it (element).

    :param record: the scene pair, its change set (computed by diff_maps when missing) and poses
    :param extent: frame size in meters
    :return: row -> level -> count
    """
    prior, gt = record.prior, record.gt
    cs = record.changes if record.changes is not None else diff_maps(prior, gt)

    members: dict[str, set[int]] = {row: set() for row in ROWS}
    members[TOTAL] = prior.ids() | gt.ids()
    for c in cs:
        e = prior.get(c.target_id)
        if e is None:
            e = gt.get(c.target_id)
        if e is None:
            raise SchemaError(f"change on {c.target_id} found in neither scene of '{gt.scene_id}'")
        members[CHANGED].add(c.target_id)
        row = change_category(c, e.kind)
        if row is not None:
            members[row].add(c.target_id)

    counts = {row: {"global": int(bool(ids)), "frame": 0, "element": len(ids)} for row, ids in members.items()}
    counts[TOTAL]["global"] = 1
    for pose in record.poses:
        seen = visible_ids(prior, pose, extent) | visible_ids(gt, pose, extent)
        counts[TOTAL]["frame"] += 1
        for row in ROWS[1:]:
            counts[row]["frame"] += int(bool(seen & members[row]))
    return counts


@dataclass
class StatsTable:
    # split -> row -> level -> count, splits in order of appearance
    counts: dict[str, dict[str, dict[str, int]]] = field(default_factory=dict)

    @property
    def splits(self) -> list[str]:
        return list(self.counts)

    def add(self, split: str, scene_counts: dict[str, dict[str, int]]):
        table = self.counts.setdefault(split, {row: dict.fromkeys(LEVELS, 0) for row in ROWS})
        for row in ROWS:
            for level in LEVELS:
                table[row][level] += scene_counts[row][level]

    def get(self, split: str, row: str, level: str) -> int:
        return self.counts.get(split, {}).get(row, {}).get(level, 0)

    def to_dict(self) -> dict[str, Any]:
        return {"rows": list(ROWS), "levels": list(LEVELS), "splits": self.counts}

    def format(self) -> str:
        header = ["", *[f"{s}/{level}" for s in self.splits for level in LEVELS]]
        rows = [[row, *[str(self.get(s, row, level)) for s in self.splits for level in LEVELS]] for row in ROWS]
        widths = [max(len(r[i]) for r in [header, *rows]) for i in range(len(header))]
        lines = [header[0].ljust(widths[0]) + "  " + "  ".join(h.rjust(w) for h, w in zip(header[1:], widths[1:]))]
        for r in rows:
            lines.append(r[0].ljust(widths[0]) + "  " + "  ".join(v.rjust(w) for v, w in zip(r[1:], widths[1:])))
        return "\n".join(lines)


def compute_stats(records: Iterable[StatsRecord], extent: float = PATCH_EXTENT) -> StatsTable:
    """
    Statistics table over a corpus of scene pairs, split by split.

    :param records: one record per scene
    :param extent: frame size in meters. By default, 50
    :return: the table; empty input gives an empty table
    """
    table = StatsTable()
    n = 0
    for record in records:
        table.add(record.split, count_scene(record, extent))
        n += 1
    logger.info(f"statistics over {n} scenes in {len(table.splits)} splits")
    return table


def load_manifest(path: Union[str, Path]) -> list[dict[str, Any]]:
    """
    Read a manifest: a JSON list of {split, prior, gt, changes, poses} with paths relative to the
    manifest. changes and poses are optional.
    """
    path = Path(path)
    try:
        entries = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as e:
        raise SchemaError(f"malformed JSON in {path}: {e.msg}") from e
    if not isinstance(entries, list):
        raise SchemaError("manifest must be a list of records")
    out = []
    for i, entry in enumerate(entries):
        if not isinstance(entry, dict):
            raise SchemaError("expected a record object", f"$[{i}]")
        unknown = sorted(set(entry) - set(MANIFEST_FIELDS))
        missing = [k for k in ("split", "prior", "gt") if k not in entry]
        if unknown or missing:
            raise SchemaError(f"unknown fields {unknown}, missing fields {missing}", f"$[{i}]")
        out.append({k: (str(path.parent / v) if k != "split" else v) for k, v in entry.items()})
    return out


def load_record(entry: dict[str, Any]) -> StatsRecord:
    """Parse the files of one manifest record."""
    changes = parse_changeset(Path(entry["changes"]).read_bytes()) if entry.get("changes") else None
    poses = tuple(load_poses(Path(entry["poses"]).read_bytes())) if entry.get("poses") else ()
    return StatsRecord(
        entry["split"],
        parse_map(Path(entry["prior"]).read_bytes()),
        parse_map(Path(entry["gt"]).read_bytes()),
        changes,
        poses,
    )


def count_entry(entry: dict[str, Any], extent: float = PATCH_EXTENT) -> tuple[str, dict[str, dict[str, int]]]:
    """Load and count one manifest record; the unit of work of a parallel stats run."""
    record = load_record(entry)
    return record.split, count_scene(record, extent)


def merge_counts(results: Sequence[tuple[str, dict[str, dict[str, int]]]]) -> StatsTable:
    table = StatsTable()
    for split, counts in results:
        table.add(split, counts)
    return table
