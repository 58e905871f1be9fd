"""
JSON codecs for scenes, ego trajectories and change sets.

Element objects mirror the lane segment / pedestrian crossing field names of the map format
one to one. Serialization is canonical: keys and ids sorted, coordinates rounded to millimeters.
"""
from __future__ import annotations

import json
import logging
from typing import Any, Mapping, Optional, Union

from shapely.geometry import Polygon

from .changes import (
    AtomicChange,
    ChangeSet,
    ConnectivityChange,
    Deletion,
    GeometryChange,
    Insertion,
    MarkingChange,
    TypeChange,
)
from .errors import GeometryError, IntegrityError, SchemaError
from .model import (
    CHANGE_TAGS,
    EgoPose,
    ElementGeometry,
    ElementKind,
    LaneMarkType,
    LaneSegment,
    LaneType,
    MapElement,
    MapScene,
    PedestrianCrossing,
)
from .utils import Polyline2D, aligned_ring

logger = logging.getLogger(__name__)

DECIMALS = 3

LANE_SEGMENT_FIELDS = (
    "id",
    "is_intersection",
    "lane_type",
    "left_lane_boundary",
    "right_lane_boundary",
    "centerline",
    "left_lane_mark_type",
    "right_lane_mark_type",
    "successors",
    "predecessors",
    "left_neighbor_id",
    "right_neighbor_id",
    "is_modified",
    "change_hist",
)
PEDESTRIAN_CROSSING_FIELDS = (
    "id",
    "left_lane_boundary",
    "right_lane_boundary",
    "centerline",
    "is_modified",
    "change_hist",
)
SCENE_FIELDS = ("scene_id", "lane_segments", "pedestrian_crossings")

Document = Union[bytes, str]


# ---------------------------------------------------------------------------- reading


def _load_json(data: Document) -> Any:
    if isinstance(data, bytes):
        try:
            data = data.decode("utf-8")
        except UnicodeDecodeError as e:
            raise SchemaError(f"document is not UTF-8: {e.reason} at byte {e.start}") from e
    try:
        return json.loads(data)
    except json.JSONDecodeError as e:
        raise SchemaError(f"malformed JSON: {e.msg} at line {e.lineno} column {e.colno}") from e


def _get(obj: Mapping, key: str, types, path: str, default: Any = ...):
    if key not in obj:
        if default is ...:
            raise SchemaError(f"missing field '{key}'", path)
        return default
    value = obj[key]
    # bool is an int subclass; never accept it where a number is expected
    if isinstance(value, bool) and bool not in (types if isinstance(types, tuple) else (types,)):
        raise SchemaError(f"field '{key}' has type bool", f"{path}.{key}")
    if not isinstance(value, types):
        raise SchemaError(f"field '{key}' has type {type(value).__name__}", f"{path}.{key}")
    return value


def _polyline(raw: Any, path: str, element_id: Optional[int] = None) -> Polyline2D:
    if not isinstance(raw, list):
        raise SchemaError(f"expected a list of points, got {type(raw).__name__}", path)
    points = []
    for i, p in enumerate(raw):
        if not isinstance(p, dict):
            raise SchemaError(f"expected a point object, got {type(p).__name__}", f"{path}[{i}]")
        # z is accepted for compatibility with 3D map files and dropped
        x = _get(p, "x", (int, float), f"{path}[{i}]")
        y = _get(p, "y", (int, float), f"{path}[{i}]")
        points.append((x, y))
    try:
        return Polyline2D(tuple(points))
    except GeometryError as e:
        raise GeometryError(f"{path}: {e}", element_id) from e


def _mark_type(raw: Any, path: str) -> LaneMarkType:
    if not isinstance(raw, dict):
        raise SchemaError(f"expected a mark type object, got {type(raw).__name__}", path)
    mark = _get(raw, "mark", str, path)
    color = _get(raw, "color", str, path)
    try:
        return LaneMarkType(mark, color)
    except ValueError as e:
        raise SchemaError(str(e), path) from e


def _id_list(raw: Any, path: str) -> tuple[int, ...]:
    if not isinstance(raw, list) or not all(isinstance(i, int) and not isinstance(i, bool) for i in raw):
        raise SchemaError("expected a list of integer ids", path)
    return tuple(raw)


def _optional_id(obj: Mapping, key: str, path: str) -> Optional[int]:
    value = obj.get(key)
    if value is None:
        return None
    if not isinstance(value, int) or isinstance(value, bool):
        raise SchemaError(f"field '{key}' must be an integer id or null", f"{path}.{key}")
    return value


def _change_status(obj: Mapping, path: str) -> tuple[bool, tuple[str, ...]]:
    is_modified = _get(obj, "is_modified", bool, path, default=False)
    hist = _get(obj, "change_hist", list, path, default=[])
    for i, tag in enumerate(hist):
        if tag not in CHANGE_TAGS:
            raise SchemaError(f"unknown change tag {tag!r}", f"{path}.change_hist[{i}]")
    if is_modified != bool(hist):
        raise SchemaError(f"is_modified={is_modified} contradicts change_hist={hist}", f"{path}.is_modified")
    return is_modified, tuple(dict.fromkeys(hist))


def _element_id(obj: Mapping, path: str) -> int:
    return _get(obj, "id", int, path)


def _geometry(obj: Mapping, path: str, element_id: Optional[int] = None) -> dict[str, Polyline2D]:
    return {
        name: _polyline(_get(obj, name, list, path), f"{path}.{name}", element_id)
        for name in ("left_lane_boundary", "right_lane_boundary", "centerline")
    }


def parse_lane_segment(obj: Any, path: str = "$") -> LaneSegment:
    if not isinstance(obj, dict):
        raise SchemaError(f"expected a lane segment object, got {type(obj).__name__}", path)
    element_id = _element_id(obj, path)
    lane_type = _get(obj, "lane_type", str, path)
    if lane_type not in {t.value for t in LaneType}:
        raise SchemaError(f"unknown lane type {lane_type!r}", f"{path}.lane_type")
    is_modified, change_hist = _change_status(obj, path)
    return LaneSegment(
        id=element_id,
        is_intersection=_get(obj, "is_intersection", bool, path),
        lane_type=LaneType(lane_type),
        **_geometry(obj, path, element_id),
        left_lane_mark_type=_mark_type(_get(obj, "left_lane_mark_type", dict, path), f"{path}.left_lane_mark_type"),
        right_lane_mark_type=_mark_type(_get(obj, "right_lane_mark_type", dict, path), f"{path}.right_lane_mark_type"),
        successors=_id_list(_get(obj, "successors", list, path), f"{path}.successors"),
        predecessors=_id_list(_get(obj, "predecessors", list, path), f"{path}.predecessors"),
        left_neighbor_id=_optional_id(obj, "left_neighbor_id", path),
        right_neighbor_id=_optional_id(obj, "right_neighbor_id", path),
        is_modified=is_modified,
        change_hist=change_hist,
        extras={k: v for k, v in obj.items() if k not in LANE_SEGMENT_FIELDS},
    )


def parse_pedestrian_crossing(obj: Any, path: str = "$") -> PedestrianCrossing:
    if not isinstance(obj, dict):
        raise SchemaError(f"expected a pedestrian crossing object, got {type(obj).__name__}", path)
    element_id = _element_id(obj, path)
    is_modified, change_hist = _change_status(obj, path)
    return PedestrianCrossing(
        id=element_id,
        **_geometry(obj, path, element_id),
        is_modified=is_modified,
        change_hist=change_hist,
        extras={k: v for k, v in obj.items() if k not in PEDESTRIAN_CROSSING_FIELDS},
    )


def _elements_by_key(doc: Mapping, name: str, parse) -> dict[int, MapElement]:
    table = _get(doc, name, dict, "$")
    elements = {}
    for key, obj in table.items():
        path = f"$.{name}.{key}"
        element = parse(obj, path)
        if key != str(element.id):
            raise SchemaError(f"key {key!r} does not match element id {element.id}", path)
        elements[element.id] = element
    return elements


def _check_integrity(scene: MapScene):
    shared = sorted(set(scene.lane_segments) & set(scene.pedestrian_crossings))
    if shared:
        raise IntegrityError(f"id {shared[0]} is used by a lane segment and a pedestrian crossing", shared[0])

    for ls in scene.lane_segments.values():
        for name, ref in ls.references():
            if ref not in scene.lane_segments:
                raise IntegrityError(f"lane segment {ls.id}: {name} references missing id {ref}", ls.id)
        for s in ls.successors:
            if ls.id not in scene.lane_segments[s].predecessors:
                raise IntegrityError(f"lane segment {ls.id} lists {s} as successor, but {s} does not list it back", ls.id)
        for p in ls.predecessors:
            if ls.id not in scene.lane_segments[p].successors:
                raise IntegrityError(f"lane segment {ls.id} lists {p} as predecessor, but {p} does not list it back", ls.id)

    for pc in scene.pedestrian_crossings.values():
        if not Polygon(aligned_ring(pc.left_lane_boundary, pc.right_lane_boundary)).is_valid:
            raise GeometryError(f"pedestrian crossing {pc.id} encloses a self-intersecting polygon", pc.id)


def parse_map(data: Document) -> MapScene:
    """
    Parse a map document into a MapScene and check its invariants.

    :param data: UTF-8 JSON bytes or text
    :return: the scene. Fields this model does not know are kept in `extras` for serialization
    :raise SchemaError: a field is missing or mistyped; the error carries the JSON path
    :raise IntegrityError: a connectivity field does not resolve or is not reciprocated
    :raise GeometryError: a polyline is degenerate or a crossing polygon self-intersects
    """
    doc = _load_json(data)
    if not isinstance(doc, dict):
        raise SchemaError(f"expected a map object, got {type(doc).__name__}")

    scene = MapScene(
        lane_segments=_elements_by_key(doc, "lane_segments", parse_lane_segment),
        pedestrian_crossings=_elements_by_key(doc, "pedestrian_crossings", parse_pedestrian_crossing),
        scene_id=_get(doc, "scene_id", str, "$", default=""),
        extras={k: v for k, v in doc.items() if k not in SCENE_FIELDS},
    )
    _check_integrity(scene)

    logger.debug(f"parsed scene '{scene.scene_id}': {len(scene.lane_segments)} ls, {len(scene.pedestrian_crossings)} pc")
    return scene


# ---------------------------------------------------------------------------- writing


def _round(v: float) -> float:
    r = float(f"{v:.{DECIMALS}f}")
    return 0.0 if r == 0.0 else r


def dump_polyline(p: Polyline2D) -> list[dict[str, float]]:
    points = [(_round(x), _round(y)) for x, y in p.points]
    kept = [points[0]]
    for q in points[1:]:
        if q != kept[-1]:
            kept.append(q)
    if len(kept) < 2:
        # sub-millimeter polyline; keep both endpoints rather than lose the element
        kept = [points[0], points[-1]]
    return [{"x": x, "y": y} for x, y in kept]


def dump_mark_type(m: LaneMarkType) -> dict[str, str]:
    return {"mark": m.mark.value, "color": m.color.value}


def dump_geometry(g: ElementGeometry) -> dict[str, list]:
    return {
        "left_lane_boundary": dump_polyline(g.left_lane_boundary),
        "right_lane_boundary": dump_polyline(g.right_lane_boundary),
        "centerline": dump_polyline(g.centerline),
    }


def dump_element(e: MapElement) -> dict[str, Any]:
    obj = dict(e.extras)
    obj.update(
        id=e.id,
        **dump_geometry(e.geometry),
        is_modified=e.is_modified,
        change_hist=list(e.change_hist),
    )
    if isinstance(e, LaneSegment):
        obj.update(
            is_intersection=e.is_intersection,
            lane_type=e.lane_type.value,
            left_lane_mark_type=dump_mark_type(e.left_lane_mark_type),
            right_lane_mark_type=dump_mark_type(e.right_lane_mark_type),
            successors=list(e.successors),
            predecessors=list(e.predecessors),
            left_neighbor_id=e.left_neighbor_id,
            right_neighbor_id=e.right_neighbor_id,
        )
    return obj


def _dumps(doc: Any) -> bytes:
    return (json.dumps(doc, sort_keys=True, indent=2, ensure_ascii=False) + "\n").encode("utf-8")


def scene_to_dict(scene: MapScene) -> dict[str, Any]:
    doc = dict(scene.extras)
    doc.update(
        scene_id=scene.scene_id,
        lane_segments={str(i): dump_element(e) for i, e in scene.lane_segments.items()},
        pedestrian_crossings={str(i): dump_element(e) for i, e in scene.pedestrian_crossings.items()},
    )
    return doc


def serialize_map(scene: MapScene) -> bytes:
    """
    Serialize a scene canonically: sorted keys, millimeter coordinates, one trailing newline.
    Two scenes with equal content always produce identical bytes.
    """
    return _dumps(scene_to_dict(scene))


# ---------------------------------------------------------------------------- poses


def load_poses(data: Document) -> list[EgoPose]:
    """
    Parse an ego trajectory: a JSON array of {timestamp_ns, x, y, heading_rad}.
    Timestamps must increase strictly.
    """
    doc = _load_json(data)
    if not isinstance(doc, list):
        raise SchemaError(f"expected a list of poses, got {type(doc).__name__}")
    poses = []
    for i, obj in enumerate(doc):
        path = f"$[{i}]"
        if not isinstance(obj, dict):
            raise SchemaError(f"expected a pose object, got {type(obj).__name__}", path)
        try:
            pose = EgoPose(
                timestamp=_get(obj, "timestamp_ns", int, path),
                x=float(_get(obj, "x", (int, float), path)),
                y=float(_get(obj, "y", (int, float), path)),
                heading=float(_get(obj, "heading_rad", (int, float), path)),
            )
        except ValueError as e:
            if isinstance(e, SchemaError):
                raise
            raise SchemaError(str(e), path) from e
        if poses and pose.timestamp <= poses[-1].timestamp:
            raise SchemaError(f"timestamp {pose.timestamp} does not increase", f"{path}.timestamp_ns")
        poses.append(pose)
    return poses


def dump_poses(poses: list[EgoPose]) -> bytes:
    return _dumps(
        [{"timestamp_ns": p.timestamp, "x": p.x, "y": p.y, "heading_rad": p.heading} for p in poses]
    )


# ---------------------------------------------------------------------------- change sets


def _dump_change(c: AtomicChange) -> dict[str, Any]:
    obj = {"target_id": c.target_id, "kind": c.kind.value}
    if isinstance(c, GeometryChange):
        obj.update(before=dump_geometry(c.before), after=dump_geometry(c.after), reroute=c.reroute)
    elif isinstance(c, MarkingChange):
        obj.update(side=c.side, before=dump_mark_type(c.before), after=dump_mark_type(c.after))
    elif isinstance(c, TypeChange):
        obj.update(before=c.before.value, after=c.after.value)
    elif isinstance(c, ConnectivityChange):
        obj.update(field=c.field, before=list(c.before), after=list(c.after))
    elif isinstance(c, (Insertion, Deletion)):
        obj.update(element={"kind": c.element.kind.value, **dump_element(c.element)}, reroute=c.reroute)
    else:
        raise TypeError(f"unsupported change type {type(c).__name__}")
    return obj


def changeset_to_dict(cs: ChangeSet) -> dict[str, Any]:
    return {"base_scene_id": cs.base_scene_id, "changes": [_dump_change(c) for c in cs]}


def serialize_changeset(cs: ChangeSet) -> bytes:
    return _dumps(changeset_to_dict(cs))


def _parse_element_geometry(obj: Any, path: str) -> ElementGeometry:
    if not isinstance(obj, dict):
        raise SchemaError(f"expected a geometry object, got {type(obj).__name__}", path)
    g = _geometry(obj, path)
    return ElementGeometry(g["left_lane_boundary"], g["right_lane_boundary"], g["centerline"])


def _parse_change(obj: Any, path: str) -> AtomicChange:
    if not isinstance(obj, dict):
        raise SchemaError(f"expected a change object, got {type(obj).__name__}", path)
    target = _get(obj, "target_id", int, path)
    kind = _get(obj, "kind", str, path)
    try:
        if kind == "geometry":
            return GeometryChange(
                target,
                _parse_element_geometry(_get(obj, "before", dict, path), f"{path}.before"),
                _parse_element_geometry(_get(obj, "after", dict, path), f"{path}.after"),
                _get(obj, "reroute", bool, path, default=False),
            )
        if kind == "marking":
            return MarkingChange(
                target,
                _get(obj, "side", str, path),
                _mark_type(_get(obj, "before", dict, path), f"{path}.before"),
                _mark_type(_get(obj, "after", dict, path), f"{path}.after"),
            )
        if kind == "type":
            return TypeChange(target, _get(obj, "before", str, path), _get(obj, "after", str, path))
        if kind == "connectivity":
            return ConnectivityChange(
                target,
                _get(obj, "field", str, path),
                _id_list(_get(obj, "before", list, path), f"{path}.before"),
                _id_list(_get(obj, "after", list, path), f"{path}.after"),
            )
        if kind in ("insertion", "deletion"):
            raw = _get(obj, "element", dict, path)
            element_kind = _get(raw, "kind", str, f"{path}.element")
            body = {k: v for k, v in raw.items() if k != "kind"}
            if element_kind == ElementKind.LANE_SEGMENT.value:
                element = parse_lane_segment(body, f"{path}.element")
            elif element_kind == ElementKind.PEDESTRIAN_CROSSING.value:
                element = parse_pedestrian_crossing(body, f"{path}.element")
            else:
                raise SchemaError(f"unknown element kind {element_kind!r}", f"{path}.element.kind")
            cls = Insertion if kind == "insertion" else Deletion
            return cls(target, element, _get(obj, "reroute", bool, path, default=False))
    except SchemaError:
        raise
    except (ValueError, TypeError) as e:
        if isinstance(e, GeometryError):
            raise
        raise SchemaError(str(e), path) from e
    raise SchemaError(f"unknown change kind {kind!r}", f"{path}.kind")


def parse_changeset(data: Document) -> ChangeSet:
    doc = _load_json(data)
    if not isinstance(doc, dict):
        raise SchemaError(f"expected a change set object, got {type(doc).__name__}")
    raw = _get(doc, "changes", list, "$")
    changes = [_parse_change(obj, f"$.changes[{i}]") for i, obj in enumerate(raw)]
    return ChangeSet(_get(doc, "base_scene_id", str, "$"), frozenset(changes))
