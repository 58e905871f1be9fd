"""
Change-aware scoring of prior-aided map predictions.

Two families of scores are computed over a list of frames:
  - mAPC: per change class, detection AP where a prediction can only match ground truth of the
    same change class, averaged over element kinds and then over classes;
  - mACC: per change class, balanced frame-level accuracy of "did anything of this class change
    in the frame", averaged over classes.
"""
from __future__ import annotations

import json
import logging
import math
from dataclasses import asdict, dataclass, field, fields
from typing import Any, Iterable, Mapping, Optional, Sequence, Union

import numpy as np

from .canonical import frame_labels
from .changes import AtomicKind, ChangeSet
from .codec import _polyline, dump_polyline
from .errors import ClassMismatch, SchemaError
from .metrics import element_distance
from .model import EgoPose, ElementGeometry, ElementKind, MapElement, MapScene
from .patch import PATCH_EXTENT, crop_patch
from .utils import resample_polyline

logger = logging.getLogger(__name__)

SAMPLE_POINTS = 10

NO_CHANGE = "no_change"
INSERTION = "insertion"
DELETION = "deletion"
OTHER = "other"
PRIMARY_LABELS = (NO_CHANGE, INSERTION, DELETION, OTHER)

# evaluation classes
GEOMETRY = "geometry"
MARKING = "marking"
CHANGED = "changed"
UNCHANGED = "unchanged"
ANY = "any"
EVAL_CLASSES = (INSERTION, DELETION, GEOMETRY, MARKING, CHANGED, UNCHANGED, ANY)
FULL_CLASSES = (INSERTION, DELETION, GEOMETRY, MARKING)
BINARY_CLASSES = (CHANGED, UNCHANGED)
CLASS_SETS = {"full": FULL_CLASSES, "binary": BINARY_CLASSES}
# frame accuracy is only defined for classes that describe a change
NON_CHANGE_CLASSES = (UNCHANGED, ANY)

LANE_THRESHOLDS = (1.0, 2.0, 3.0)
CROSSING_THRESHOLDS = (0.5, 1.0, 1.5)
CONFIDENCE_THRESHOLD = 0.5


def resampled_geometry(g: ElementGeometry, n: int = SAMPLE_POINTS) -> ElementGeometry:
    return ElementGeometry(*(resample_polyline(p, n) for p in g.polylines()))


def _check_label(primary_label: str, geo: bool, mark: bool):
    if primary_label not in PRIMARY_LABELS:
        raise ValueError(f"'primary_label' must be one of {PRIMARY_LABELS}, but got {primary_label!r}")
    if (geo or mark) and primary_label != OTHER:
        raise ValueError(f"geo/mark flags require primary label '{OTHER}', got {primary_label!r}")


def in_class(label: "Labelled", c: str) -> bool:
    """Whether a labelled element belongs to the pool of evaluation class c."""
    p = label.primary_label
    if c == ANY:
        return True
    if c == CHANGED:
        return p != NO_CHANGE
    if c == UNCHANGED:
        return p == NO_CHANGE
    if c == GEOMETRY:
        return p == OTHER and label.geo
    if c == MARKING:
        return p == OTHER and label.mark
    return p == c


@dataclass(frozen=True)
class Labelled:
    kind: ElementKind
    geometry: ElementGeometry
    primary_label: str = NO_CHANGE
    geo: bool = False
    mark: bool = False

    def __post_init__(self):
        object.__setattr__(self, "kind", ElementKind(self.kind))
        _check_label(self.primary_label, self.geo, self.mark)

    @property
    def change_hist(self) -> tuple[str, ...]:
        if self.primary_label in (INSERTION, DELETION):
            return (self.primary_label,)
        return (("geometry",) if self.geo else ()) + (("marking",) if self.mark else ())


@dataclass(frozen=True)
class PredictedElement(Labelled):
    confidence: float = 1.0

    def __post_init__(self):
        super().__post_init__()
        if not 0.0 <= self.confidence <= 1.0:
            raise ValueError(f"'confidence' must be in [0, 1], but got {self.confidence}")


@dataclass(frozen=True)
class GroundTruthElement(Labelled):
    element_id: Optional[int] = None


@dataclass(frozen=True)
class FrameSample:
    frame_id: str
    predictions: tuple[PredictedElement, ...] = ()
    ground_truth: tuple[GroundTruthElement, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "predictions", tuple(self.predictions))
        object.__setattr__(self, "ground_truth", tuple(self.ground_truth))
        for e in (*self.predictions, *self.ground_truth):
            if any(len(p) != SAMPLE_POINTS for p in e.geometry.polylines()):
                raise ValueError(f"frame {self.frame_id}: geometries must be resampled to {SAMPLE_POINTS} points")

    def labels(self) -> dict[str, bool]:
        return frame_labels(self.ground_truth)


@dataclass(frozen=True)
class EvalConfig:
    lane_thresholds: tuple[float, ...] = LANE_THRESHOLDS
    crossing_thresholds: tuple[float, ...] = CROSSING_THRESHOLDS
    conf_threshold: float = CONFIDENCE_THRESHOLD
    classes: tuple[str, ...] = FULL_CLASSES

    def __post_init__(self):
        for name in ("lane_thresholds", "crossing_thresholds", "classes"):
            object.__setattr__(self, name, tuple(getattr(self, name)))
        for name in ("lane_thresholds", "crossing_thresholds"):
            t = getattr(self, name)
            if not t or any(v <= 0 for v in t) or list(t) != sorted(t):
                raise ValueError(f"'{name}' must be positive and ascending, but got {t}")
        if not 0.0 <= self.conf_threshold <= 1.0:
            raise ValueError(f"'conf_threshold' must be in [0, 1], but got {self.conf_threshold}")
        if not self.classes:
            raise ValueError("'classes' must not be empty")
        unknown = [c for c in self.classes if c not in EVAL_CLASSES]
        if unknown:
            raise ValueError(f"unknown evaluation classes {unknown}; available: {EVAL_CLASSES}")

    def thresholds(self, kind: ElementKind) -> tuple[float, ...]:
        return self.lane_thresholds if kind is ElementKind.LANE_SEGMENT else self.crossing_thresholds

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "EvalConfig":
        unknown = sorted(set(d) - {f.name for f in fields(cls)})
        if unknown:
            raise SchemaError(f"unknown eval config fields {unknown}")
        return cls(**d)

    def to_dict(self) -> dict[str, Any]:
        return {k: list(v) if isinstance(v, tuple) else v for k, v in asdict(self).items()}


# ---------------------------------------------------------------------------- ground truth


def build_eval_ground_truth(prior: MapScene, gt: MapScene, cs: ChangeSet) -> list[GroundTruthElement]:
    """
    Label ground-truth elements for scoring. Every gt element is labelled insertion, other (with
    geo/mark flags) or no_change from the change set; every deleted prior element is added with
    label deletion. Elements whose only changes are type or connectivity edits count as no_change.

    :param prior: the stale map (or a patch of it)
    :param gt: the up-to-date map (or the patch at the same pose)
    :param cs: the change set from prior to gt
    :return: labelled elements in ascending id order, geometry resampled to 10 points
    """
    by_target = cs.by_target()
    out = []

    def labelled(e: MapElement, label: str, geo: bool = False, mark: bool = False) -> GroundTruthElement:
        return GroundTruthElement(e.kind, resampled_geometry(e.geometry), label, geo, mark, e.id)

    for e in gt.elements():
        kinds = {c.kind for c in by_target.get(e.id, ())}
        if AtomicKind.INSERTION in kinds:
            out.append(labelled(e, INSERTION))
            continue
        geo, mark = AtomicKind.GEOMETRY in kinds, AtomicKind.MARKING in kinds
        out.append(labelled(e, OTHER if geo or mark else NO_CHANGE, geo, mark))
    for c in cs.deletions:
        if c.target_id in prior:
            out.append(labelled(prior[c.target_id], DELETION))
    return sorted(out, key=lambda g: g.element_id)


def ground_truth_frame(
    prior: MapScene, gt: MapScene, cs: ChangeSet, pose: EgoPose, extent: float = PATCH_EXTENT
) -> FrameSample:
    """Ground truth of the patch around one pose, without predictions."""
    labels = build_eval_ground_truth(crop_patch(prior, pose, extent), crop_patch(gt, pose, extent), cs)
    return FrameSample(f"{gt.scene_id}:{pose.timestamp}", (), tuple(labels))


# ---------------------------------------------------------------------------- AP


def average_precision(recall: np.ndarray, precision: np.ndarray) -> float:
    """Area under the monotone precision envelope (all-point interpolation)."""
    mrec = np.concatenate([[0.0], recall, [1.0]])
    mpre = np.concatenate([[0.0], precision, [0.0]])
    mpre = np.maximum.accumulate(mpre[::-1])[::-1]
    steps = np.diff(mrec)
    return float(np.sum(steps * mpre[1:]))


def _pools(frames: Sequence[FrameSample], c: str, kind: ElementKind):
    preds = []
    gts = {}
    for f in frames:
        gts[f.frame_id] = [g for g in f.ground_truth if g.kind is kind and in_class(g, c)]
        for idx, p in enumerate(f.predictions):
            if p.kind is kind and in_class(p, c):
                preds.append((f.frame_id, idx, p))
    # confidence descending, ties broken by (frame_id, index)
    preds.sort(key=lambda t: (-t[2].confidence, t[0], t[1]))
    return preds, gts


def match_predictions(frames: Sequence[FrameSample], c: str, kind: ElementKind, threshold: float) -> tuple[np.ndarray, int]:
    """
    Greedy one-to-one matching in confidence order: each prediction takes the nearest still
    unmatched ground-truth element of the same frame, kind and class within the threshold.

    :return: a boolean true-positive flag per prediction in matching order, and the number of
             ground-truth elements in the pool
    """
    preds, gts = _pools(frames, c, kind)
    n_gt = sum(len(v) for v in gts.values())
    taken = {fid: np.zeros(len(v), dtype=bool) for fid, v in gts.items()}
    tp = np.zeros(len(preds), dtype=bool)
    for k, (fid, _, p) in enumerate(preds):
        candidates = gts[fid]
        if not candidates:
            continue
        d = np.array([element_distance(kind, g.geometry, p.geometry) for g in candidates])
        d[taken[fid]] = math.inf
        best = int(np.argmin(d))
        if d[best] <= threshold:
            taken[fid][best] = True
            tp[k] = True
    return tp, n_gt


def ap_for_class(
    frames: Sequence[FrameSample], c: str, kind: Union[ElementKind, str], thresholds: Sequence[float]
) -> Optional[float]:
    """
    Change-aware average precision of one class and element kind, averaged over distance thresholds.

    :param frames: scored frames
    :param c: an evaluation class
    :param kind: lane_segment or pedestrian_crossing
    :param thresholds: positive ascending distance thresholds in meters
    :return: AP in [0, 100], or None when no frame has ground truth of this class and kind
    """
    kind = ElementKind(kind)
    if not thresholds or any(t <= 0 for t in thresholds) or list(thresholds) != sorted(thresholds):
        raise ValueError(f"'thresholds' must be positive and ascending, but got {thresholds}")

    aps = []
    for t in thresholds:
        tp, n_gt = match_predictions(frames, c, kind, t)
        if n_gt == 0:
            return None
        if len(tp) == 0:
            aps.append(0.0)
            continue
        ctp = np.cumsum(tp)
        cfp = np.cumsum(~tp)
        aps.append(average_precision(ctp / n_gt, ctp / (ctp + cfp)))
    return 100.0 * float(np.mean(aps))


# ---------------------------------------------------------------------------- reports


def _mean(values: Iterable[Optional[float]]) -> Optional[float]:
    defined = [v for v in values if v is not None]
    return float(np.mean(defined)) if defined else None


@dataclass
class EvalReport:
    classes: tuple[str, ...]
    ap: dict[str, dict[str, Optional[float]]] = field(default_factory=dict)
    map_c: dict[str, Optional[float]] = field(default_factory=dict)
    mapc: Optional[float] = None
    map: Optional[float] = None
    acc_pos: dict[str, Optional[float]] = field(default_factory=dict)
    acc_neg: dict[str, Optional[float]] = field(default_factory=dict)
    macc_c: dict[str, Optional[float]] = field(default_factory=dict)
    macc: Optional[float] = None
    # (class, side) pairs whose accuracy had no frames to be computed on
    undefined_sides: list[tuple[str, str]] = field(default_factory=list)

    def to_dict(self) -> dict[str, Any]:
        d = asdict(self)
        d["classes"] = list(self.classes)
        d["undefined_sides"] = [list(s) for s in self.undefined_sides]
        return d

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "EvalReport":
        unknown = sorted(set(d) - {f.name for f in fields(cls)})
        if unknown:
            raise SchemaError(f"unknown report fields {unknown}")
        if "classes" not in d:
            raise SchemaError("missing field 'classes'")
        d = dict(d)
        d["classes"] = tuple(d["classes"])
        d["undefined_sides"] = [tuple(s) for s in d.get("undefined_sides", [])]
        return cls(**d)


def evaluate_mapc(
    frames: Sequence[FrameSample], classes: Sequence[str] = FULL_CLASSES, config: EvalConfig = EvalConfig()
) -> EvalReport:
    """
    AP side of the report: AP per class and kind, mAP_c, mAPC over the classes and plain mAP.

    mAP_c averages the element kinds that have ground truth of class c; classes without any
    ground truth are left out of mAPC. Plain mAP is the same computation with the single
    class `any`, where matching ignores change labels.
    """
    if not classes:
        raise ValueError("'classes' must not be empty")
    report = EvalReport(tuple(classes))
    for c in classes:
        report.ap[c] = {k.value: ap_for_class(frames, c, k, config.thresholds(k)) for k in ElementKind}
        report.map_c[c] = _mean(report.ap[c].values())
    report.mapc = _mean(report.map_c.values())
    report.map = _mean(ap_for_class(frames, ANY, k, config.thresholds(k)) for k in ElementKind)
    logger.info(f"mAPC {report.mapc} mAP {report.map} over {len(frames)} frames")
    return report


def evaluate_macc(
    frames: Sequence[FrameSample],
    classes: Sequence[str] = FULL_CLASSES,
    conf_threshold: float = CONFIDENCE_THRESHOLD,
    report: Optional[EvalReport] = None,
) -> EvalReport:
    """
    Accuracy side of the report. A frame is positive for class c when its ground truth has an
    element of class c, and predicted positive when a prediction with confidence at or above the
    threshold carries class c. Acc+ is the hit rate on positive frames, Acc- the rejection rate on
    negative frames, and mAcc_c their mean. A side without frames is left out of the mean and
    recorded in `undefined_sides`. unchanged and any are not change classes and get no accuracy.

    :param frames: scored frames
    :param classes: the evaluation classes
    :param conf_threshold: By default, 0.5
    :param report: optional report to fill in; a new one is created otherwise
    :return: the report
    """
    if not 0.0 <= conf_threshold <= 1.0:
        raise ValueError(f"'conf_threshold' must be in [0, 1], but got {conf_threshold}")
    report = report if report is not None else EvalReport(tuple(classes))

    for c in classes:
        if c in NON_CHANGE_CLASSES:
            continue
        truth = np.array([any(in_class(g, c) for g in f.ground_truth) for f in frames], dtype=bool)
        hit = np.array(
            [any(p.confidence >= conf_threshold and in_class(p, c) for p in f.predictions) for f in frames], dtype=bool
        )
        pos = 100.0 * float(np.mean(hit[truth])) if truth.any() else None
        neg = 100.0 * float(np.mean(~hit[~truth])) if (~truth).any() else None
        for side, value in (("+", pos), ("-", neg)):
            if value is None:
                report.undefined_sides.append((c, side))
                logger.warning(f"class '{c}' has no {'positive' if side == '+' else 'negative'} frames; Acc{side} undefined")
        report.acc_pos[c], report.acc_neg[c] = pos, neg
        report.macc_c[c] = _mean((pos, neg))
    report.macc = _mean(report.macc_c.values())
    return report


def evaluate(frames: Sequence[FrameSample], config: EvalConfig = EvalConfig()) -> EvalReport:
    report = evaluate_mapc(frames, config.classes, config)
    return evaluate_macc(frames, config.classes, config.conf_threshold, report)


# ---------------------------------------------------------------------------- comparison and formatting


@dataclass(frozen=True)
class GapTable:
    classes: tuple[str, ...]
    map_c: dict[str, Optional[float]]
    macc_c: dict[str, Optional[float]]
    mapc: Optional[float]
    macc: Optional[float]


def _delta(val: Optional[float], test: Optional[float]) -> Optional[float]:
    return None if val is None or test is None else test - val


def gap_compare(report_val: EvalReport, report_test: EvalReport) -> GapTable:
    """
    Sim-to-real gap: test minus validation value of every per-class and aggregate score.

    :raise ClassMismatch: the reports were computed over different class sets
    """
    if tuple(report_val.classes) != tuple(report_test.classes):
        raise ClassMismatch(f"validation classes {report_val.classes} differ from test classes {report_test.classes}")
    classes = tuple(report_val.classes)
    return GapTable(
        classes=classes,
        map_c={c: _delta(report_val.map_c.get(c), report_test.map_c.get(c)) for c in classes},
        macc_c={c: _delta(report_val.macc_c.get(c), report_test.macc_c.get(c)) for c in classes},
        mapc=_delta(report_val.mapc, report_test.mapc),
        macc=_delta(report_val.macc, report_test.macc),
    )


def _cell(v: Optional[float], signed: bool = False) -> str:
    if v is None:
        return "--"
    return f"{v:+.1f}" if signed else f"{v:.1f}"


def _table(header: list[str], rows: list[list[str]]) -> str:
    widths = [max(len(r[i]) for r in [header, *rows]) for i in range(len(header))]
    lines = ["  ".join(h.rjust(w) for h, w in zip(header, widths))]
    lines += ["  ".join(v.rjust(w) for v, w in zip(r, widths)) for r in rows]
    return "\n".join(lines)


def format_report(report: EvalReport) -> str:
    """Aligned text table: mAP_c per class, mAP, mAPC, mAcc_c per class and mACC; '--' where undefined."""
    header = ["", *[f"mAP[{c}]" for c in report.classes], "mAP", "mAPC"]
    header += [f"mAcc[{c}]" for c in report.classes if c not in NON_CHANGE_CLASSES] + ["mACC"]
    row = ["score", *[_cell(report.map_c.get(c)) for c in report.classes], _cell(report.map), _cell(report.mapc)]
    row += [_cell(report.macc_c.get(c)) for c in report.classes if c not in NON_CHANGE_CLASSES] + [_cell(report.macc)]
    return _table(header, [row])


def format_gap(gap: GapTable) -> str:
    header = ["", *gap.classes, "aggregate"]
    rows = [
        ["dmAP", *[_cell(gap.map_c[c], True) for c in gap.classes], _cell(gap.mapc, True)],
        ["dmAcc", *[_cell(gap.macc_c[c], True) for c in gap.classes], _cell(gap.macc, True)],
    ]
    return _table(header, rows)


# ---------------------------------------------------------------------------- frame files


def _dump_labelled(e: Labelled) -> dict[str, Any]:
    obj = {
        "kind": e.kind.value,
        "label": e.primary_label,
        "geo": e.geo,
        "mark": e.mark,
        "left_lane_boundary": dump_polyline(e.geometry.left_lane_boundary),
        "right_lane_boundary": dump_polyline(e.geometry.right_lane_boundary),
        "centerline": dump_polyline(e.geometry.centerline),
    }
    if isinstance(e, PredictedElement):
        obj["confidence"] = e.confidence
    if isinstance(e, GroundTruthElement) and e.element_id is not None:
        obj["id"] = e.element_id
    return obj


def _parse_labelled(obj: Any, path: str, predicted: bool) -> Labelled:
    if not isinstance(obj, dict):
        raise SchemaError(f"expected an element object, got {type(obj).__name__}", path)
    try:
        geometry = ElementGeometry(
            *(_polyline(obj.get(name), f"{path}.{name}") for name in ("left_lane_boundary", "right_lane_boundary", "centerline"))
        )
        common = dict(
            kind=ElementKind(obj["kind"]),
            geometry=geometry,
            primary_label=obj.get("label", NO_CHANGE),
            geo=bool(obj.get("geo", False)),
            mark=bool(obj.get("mark", False)),
        )
        if predicted:
            return PredictedElement(**common, confidence=float(obj["confidence"]))
        return GroundTruthElement(**common, element_id=obj.get("id"))
    except KeyError as e:
        raise SchemaError(f"missing field {e.args[0]!r}", path) from e
    except SchemaError:
        raise
    except ValueError as e:
        raise SchemaError(str(e), path) from e


def frame_to_dict(frame: FrameSample) -> dict[str, Any]:
    return {
        "frame_id": frame.frame_id,
        "predictions": [_dump_labelled(p) for p in frame.predictions],
        "ground_truth": [_dump_labelled(g) for g in frame.ground_truth],
    }


def frame_from_dict(obj: Any, path: str = "$") -> FrameSample:
    if not isinstance(obj, dict) or "frame_id" not in obj:
        raise SchemaError("expected a frame object with a 'frame_id'", path)
    try:
        return FrameSample(
            str(obj["frame_id"]),
            tuple(_parse_labelled(p, f"{path}.predictions[{i}]", True) for i, p in enumerate(obj.get("predictions", []))),
            tuple(_parse_labelled(g, f"{path}.ground_truth[{i}]", False) for i, g in enumerate(obj.get("ground_truth", []))),
        )
    except SchemaError:
        raise
    except ValueError as e:
        raise SchemaError(str(e), path) from e


def write_frames(frames: Iterable[FrameSample]) -> str:
    """JSON lines, one frame per line."""
    return "".join(json.dumps(frame_to_dict(f), sort_keys=True) + "\n" for f in frames)


def read_frames(text: str) -> list[FrameSample]:
    frames = []
    for n, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as e:
            raise SchemaError(f"malformed JSON: {e.msg}", f"line {n}") from e
        frames.append(frame_from_dict(obj, f"line {n}"))
    return frames


def merge_frames(predictions: Sequence[FrameSample], ground_truth: Sequence[FrameSample]) -> list[FrameSample]:
    """Pair prediction frames with ground-truth frames by frame id; frames missing predictions score as empty."""
    preds = {f.frame_id: f.predictions for f in predictions}
    unknown = sorted(set(preds) - {f.frame_id for f in ground_truth})
    if unknown:
        raise SchemaError(f"predictions for frames without ground truth: {unknown}")
    return [FrameSample(g.frame_id, preds.get(g.frame_id, ()), g.ground_truth) for g in ground_truth]
