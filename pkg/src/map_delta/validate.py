from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Iterator, Optional

from shapely.geometry import Polygon

from .model import CHANGE_TAGS, MapScene
from .utils import aligned_ring, boundaries_opposed, signed_area

logger = logging.getLogger(__name__)

ERROR = "error"
WARNING = "warning"

# rule names
REFERENTIAL_INTEGRITY = "referential integrity"
SYMMETRY = "predecessor/successor symmetry"
UNIQUE_ID = "globally unique id"
MODIFIED_FLAG = "is_modified consistency"
CHANGE_TAG = "change tag vocabulary"
SIMPLE_CROSSING = "simple crossing polygon"
ORIENTATION = "canonical orientation"


@dataclass(frozen=True)
class Violation:
    element_id: Optional[int]
    rule: str
    message: str
    level: str = ERROR

    def __str__(self):
        where = "scene" if self.element_id is None else f"element {self.element_id}"
        return f"[{self.level}] {where}: {self.rule}: {self.message}"


@dataclass
class ValidationReport:
    violations: list[Violation] = field(default_factory=list)

    def add(self, element_id, rule, message, level=ERROR):
        self.violations.append(Violation(element_id, rule, message, level))

    def extend(self, other: "ValidationReport"):
        self.violations.extend(other.violations)

    def __len__(self):
        return len(self.violations)

    def __iter__(self) -> Iterator[Violation]:
        return iter(self.violations)

    @property
    def errors(self) -> list[Violation]:
        return [v for v in self.violations if v.level == ERROR]

    @property
    def warnings(self) -> list[Violation]:
        return [v for v in self.violations if v.level == WARNING]

    @property
    def ok(self) -> bool:
        return not self.errors

    def rules(self) -> list[str]:
        return [v.rule for v in self.violations]

    def format(self) -> str:
        if not self.violations:
            return "no violations"
        return "\n".join(str(v) for v in self.violations)


def validate_scene(scene: MapScene, *, orientation_unified: bool = False) -> ValidationReport:
    """
    Check every invariant of a scene and list the violations.

    :param scene: the scene to check
    :param orientation_unified: whether crossing orientation has already been unified. A clockwise
                    crossing is then an error; otherwise it is reported as a warning.
    :return: a report that is empty iff all invariants hold
    """
    report = ValidationReport()

    for i in sorted(set(scene.lane_segments) & set(scene.pedestrian_crossings)):
        report.add(i, UNIQUE_ID, f"id {i} is used by a lane segment and a pedestrian crossing")

    for e in scene.elements():
        if e.is_modified != bool(e.change_hist):
            report.add(e.id, MODIFIED_FLAG, f"is_modified={e.is_modified} but change_hist={list(e.change_hist)}")
        unknown = [t for t in e.change_hist if t not in CHANGE_TAGS]
        if unknown:
            report.add(e.id, CHANGE_TAG, f"unknown change tags {unknown}")

    for ls in scene.lane_segments.values():
        for name, ref in ls.references():
            if ref not in scene.lane_segments:
                report.add(ls.id, REFERENTIAL_INTEGRITY, f"{name} references missing lane segment {ref}")
        for s in ls.successors:
            other = scene.lane_segments.get(s)
            if other is not None and ls.id not in other.predecessors:
                report.add(ls.id, SYMMETRY, f"{s} is a successor of {ls.id} but {ls.id} is not a predecessor of {s}")
        for p in ls.predecessors:
            other = scene.lane_segments.get(p)
            if other is not None and ls.id not in other.successors:
                report.add(ls.id, SYMMETRY, f"{p} is a predecessor of {ls.id} but {ls.id} is not a successor of {p}")

    for pc in scene.pedestrian_crossings.values():
        left, right = pc.left_lane_boundary, pc.right_lane_boundary
        ring = aligned_ring(left, right)
        if not Polygon(ring).is_valid:
            report.add(pc.id, SIMPLE_CROSSING, "boundaries enclose a self-intersecting polygon")
        elif boundaries_opposed(left, right) or signed_area(ring) < 0.0:
            report.add(
                pc.id,
                ORIENTATION,
                "boundary polygon is not counterclockwise",
                level=ERROR if orientation_unified else WARNING,
            )

    if report.violations:
        logger.info(f"scene '{scene.scene_id}': {len(report.errors)} errors, {len(report.warnings)} warnings")
    return report
