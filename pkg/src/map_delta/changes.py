"""
Atomic changes, change sets and macro-modifications.

An atomic change is the smallest element-level edit between a prior map and its ground truth.
A ChangeSet is an order-free set of them. Macro-modifications are the closed vocabulary of
structural updates the atomic changes are mapped onto through MAPPING_MATRIX.
"""
from __future__ import annotations

from collections import defaultdict
from dataclasses import dataclass, field
from enum import Enum
from typing import ClassVar, Iterable, Iterator, Optional

from .model import ElementGeometry, ElementKind, LaneMarkType, LaneType, MapElement


class AtomicKind(str, Enum):
    GEOMETRY = "geometry"
    MARKING = "marking"
    TYPE = "type"
    CONNECTIVITY = "connectivity"
    INSERTION = "insertion"
    DELETION = "deletion"


_KIND_ORDER = {k: i for i, k in enumerate(AtomicKind)}

SIDES = ("left", "right")
CONNECTIVITY_FIELDS = ("successors", "predecessors", "left_neighbor", "right_neighbor")


@dataclass(frozen=True)
class AtomicChange:
    target_id: int

    kind: ClassVar[AtomicKind]

    @property
    def slot(self) -> str:
        """At most one change per (target, slot) may exist in a ChangeSet."""
        return self.kind.value

    @property
    def tags(self) -> tuple[str, ...]:
        return (self.kind.value,)

    def inverted(self) -> "AtomicChange":
        raise NotImplementedError

    def sort_key(self):
        return self.target_id, _KIND_ORDER[self.kind], self.slot


def _check_differs(change: AtomicChange, before, after):
    if before == after:
        raise ValueError(f"{change.kind.value} change on {change.target_id} has identical before and after")


@dataclass(frozen=True)
class GeometryChange(AtomicChange):
    before: ElementGeometry
    after: ElementGeometry
    # geometry edit inside an intersection that keeps the element's role on a rerouted road graph
    reroute: bool = False

    kind = AtomicKind.GEOMETRY

    def __post_init__(self):
        _check_differs(self, self.before, self.after)

    @property
    def tags(self):
        return ("geometry", "reroute") if self.reroute else ("geometry",)

    def inverted(self):
        return GeometryChange(self.target_id, self.after, self.before, self.reroute)


@dataclass(frozen=True)
class MarkingChange(AtomicChange):
    side: str
    before: LaneMarkType
    after: LaneMarkType

    kind = AtomicKind.MARKING

    def __post_init__(self):
        if self.side not in SIDES:
            raise ValueError(f"'side' must be one of {SIDES}, but got {self.side!r}")
        _check_differs(self, self.before, self.after)

    @property
    def slot(self):
        return f"marking:{self.side}"

    def inverted(self):
        return MarkingChange(self.target_id, self.side, self.after, self.before)


@dataclass(frozen=True)
class TypeChange(AtomicChange):
    before: LaneType
    after: LaneType

    kind = AtomicKind.TYPE

    def __post_init__(self):
        object.__setattr__(self, "before", LaneType(self.before))
        object.__setattr__(self, "after", LaneType(self.after))
        _check_differs(self, self.before, self.after)

    def inverted(self):
        return TypeChange(self.target_id, self.after, self.before)


@dataclass(frozen=True)
class ConnectivityChange(AtomicChange):
    field: str
    before: tuple[int, ...]
    after: tuple[int, ...]

    kind = AtomicKind.CONNECTIVITY

    def __post_init__(self):
        if self.field not in CONNECTIVITY_FIELDS:
            raise ValueError(f"'field' must be one of {CONNECTIVITY_FIELDS}, but got {self.field!r}")
        object.__setattr__(self, "before", tuple(sorted(self.before)))
        object.__setattr__(self, "after", tuple(sorted(self.after)))
        if self.field.endswith("neighbor") and (len(self.before) > 1 or len(self.after) > 1):
            raise ValueError(f"{self.field} holds at most one id")
        _check_differs(self, self.before, self.after)

    @property
    def slot(self):
        return f"connectivity:{self.field}"

    def inverted(self):
        return ConnectivityChange(self.target_id, self.field, self.after, self.before)


@dataclass(frozen=True)
class Insertion(AtomicChange):
    element: MapElement
    # one half of a rerouted segment expanded back into a deletion + insertion pair
    reroute: bool = False

    kind = AtomicKind.INSERTION

    def __post_init__(self):
        if self.element.id != self.target_id:
            raise ValueError(f"insertion target {self.target_id} does not match element id {self.element.id}")

    @property
    def tags(self):
        return ("insertion", "reroute") if self.reroute else ("insertion",)

    def inverted(self):
        return Deletion(self.target_id, self.element, self.reroute)


@dataclass(frozen=True)
class Deletion(AtomicChange):
    # full payload, so a change set can be inverted without the base scene
    element: MapElement
    reroute: bool = False

    kind = AtomicKind.DELETION

    def __post_init__(self):
        if self.element.id != self.target_id:
            raise ValueError(f"deletion target {self.target_id} does not match element id {self.element.id}")

    @property
    def tags(self):
        return ("deletion", "reroute") if self.reroute else ("deletion",)

    def inverted(self):
        return Insertion(self.target_id, self.element, self.reroute)


def is_reroute_pair(changes: Iterable[AtomicChange]) -> bool:
    """Whether the changes of one target are exactly a reroute deletion and a reroute insertion."""
    changes = list(changes)
    return (
        len(changes) == 2
        and {c.kind for c in changes} == {AtomicKind.INSERTION, AtomicKind.DELETION}
        and all(c.reroute for c in changes)
    )


@dataclass(frozen=True)
class ChangeSet:
    base_scene_id: str
    changes: frozenset = field(default_factory=frozenset)

    def __post_init__(self):
        object.__setattr__(self, "changes", frozenset(self.changes))

    def __iter__(self) -> Iterator[AtomicChange]:
        return iter(sorted(self.changes, key=AtomicChange.sort_key))

    def __len__(self):
        return len(self.changes)

    def of_kind(self, *kinds: AtomicKind) -> list[AtomicChange]:
        return [c for c in self if c.kind in kinds]

    @property
    def insertions(self) -> list[Insertion]:
        return self.of_kind(AtomicKind.INSERTION)

    @property
    def deletions(self) -> list[Deletion]:
        return self.of_kind(AtomicKind.DELETION)

    def targets(self) -> set[int]:
        return {c.target_id for c in self.changes}

    def replaced(self) -> set[int]:
        """Ids deleted and inserted again as a reroute pair."""
        return {c.target_id for c in self.deletions} & {c.target_id for c in self.insertions}

    def by_target(self) -> dict[int, list[AtomicChange]]:
        grouped = defaultdict(list)
        for c in self:
            grouped[c.target_id].append(c)
        return dict(grouped)

    def conflicts(self) -> list[str]:
        """
        Describe every violation of the set invariants: a target changed twice in the same slot,
        or an inserted/deleted target that also carries other changes. A reroute deletion paired
        with a reroute insertion of the same id replaces the segment and is allowed.
        """
        problems = []
        for target, changes in self.by_target().items():
            if is_reroute_pair(changes):
                continue
            slots = [c.slot for c in changes]
            for slot in sorted({s for s in slots if slots.count(s) > 1}):
                problems.append(f"element {target} has more than one '{slot}' change")
            exclusive = [c for c in changes if c.kind in (AtomicKind.INSERTION, AtomicKind.DELETION)]
            if exclusive and len(changes) > 1:
                others = sorted({c.kind.value for c in changes} - {exclusive[0].kind.value})
                kinds = others or [exclusive[0].kind.value]
                problems.append(f"element {target} is {exclusive[0].kind.value}-changed together with {kinds}")
        return problems

    def inverted(self) -> "ChangeSet":
        return ChangeSet(self.base_scene_id, frozenset(c.inverted() for c in self.changes))

    def union(self, changes: Iterable[AtomicChange]) -> "ChangeSet":
        return ChangeSet(self.base_scene_id, self.changes | frozenset(changes))


def element_kind_of(change: AtomicChange) -> Optional[ElementKind]:
    if isinstance(change, (Insertion, Deletion)):
        return change.element.kind
    if isinstance(change, (MarkingChange, TypeChange, ConnectivityChange)):
        return ElementKind.LANE_SEGMENT
    return None


class MacroKind(str, Enum):
    SHAPE = "shape"
    APPEARANCE = "appearance"
    FUNCTION = "function"
    LANE_GRAPH = "lane_graph"
    LANE_NUMBER = "lane_number"


@dataclass(frozen=True)
class MacroModification:
    kind: MacroKind
    lane_number_delta: int = 0

    def __post_init__(self):
        object.__setattr__(self, "kind", MacroKind(self.kind))
        if (self.lane_number_delta != 0) != (self.kind is MacroKind.LANE_NUMBER):
            raise ValueError("lane_number_delta must be non-zero exactly for the lane_number macro")

    def __str__(self):
        if self.kind is MacroKind.LANE_NUMBER:
            return f"lane_number{self.lane_number_delta:+d}"
        return self.kind.value


class Contribution(str, Enum):
    YES = "yes"
    IF_TOPOLOGY_CHANGE = "yes*"
    NO = "no"
    PLUS_ONE = "+1"
    MINUS_ONE = "-1"
    ZERO = "0"


_Y, _S, _N = Contribution.YES, Contribution.IF_TOPOLOGY_CHANGE, Contribution.NO

MATRIX_COLUMNS = (AtomicKind.GEOMETRY, AtomicKind.MARKING, AtomicKind.TYPE, AtomicKind.INSERTION, AtomicKind.DELETION)

# which atomic change kinds produce which macro-modification; starred entries only count
# when the lane graph topology changes as well
MAPPING_MATRIX = {
    MacroKind.SHAPE: dict(zip(MATRIX_COLUMNS, (_Y, _N, _N, _S, _S))),
    MacroKind.APPEARANCE: dict(zip(MATRIX_COLUMNS, (_N, _Y, _N, _S, _S))),
    MacroKind.FUNCTION: dict(zip(MATRIX_COLUMNS, (_N, _N, _Y, _S, _S))),
    MacroKind.LANE_GRAPH: dict(zip(MATRIX_COLUMNS, (_N, _N, _N, _Y, _Y))),
    MacroKind.LANE_NUMBER: dict(
        zip(
            MATRIX_COLUMNS,
            (Contribution.ZERO, Contribution.ZERO, Contribution.ZERO, Contribution.PLUS_ONE, Contribution.MINUS_ONE),
        )
    ),
}
