from __future__ import annotations

import io
from typing import Iterable, Optional, Sequence, Union

import matplotlib as mpl
import numpy as np
from matplotlib.colors import to_rgba
from matplotlib.figure import Figure
from matplotlib.patches import Polygon as PolygonPatch
from matplotlib.patches import Rectangle

from .changes import ChangeSet
from .evaluate import FrameSample
from .model import ElementKind, MapElement, MapScene

# drawing order of the change classes; the first class of an element fills it, the second stripes it
CHANGE_COLORS = {
    "insertion": "#90ee90",
    "deletion": "#ff0000",
    "geometry": "#006400",
    "marking": "#800080",
}
UNCHANGED_COLOR = "#b0b0b0"
PREDICTION_COLOR = "#000000"
DEFAULT_EXTENT = 50.0

_KIND_PREFIX = {ElementKind.LANE_SEGMENT: "ls", ElementKind.PEDESTRIAN_CROSSING: "pc"}


def change_classes(tags: Iterable[str]) -> tuple[str, ...]:
    """The drawable change classes among the tags, in CHANGE_COLORS order."""
    tags = set(tags)
    return tuple(c for c in CHANGE_COLORS if c in tags)


def _classes_from_changes(cs: ChangeSet) -> dict[int, tuple[str, ...]]:
    return {i: change_classes(c.kind.value for c in changes) for i, changes in cs.by_target().items()}


def paint_element(ax, kind: ElementKind, geometry, classes: Sequence[str], gid: str, *, alpha=0.6, linewidth=0.8):
    """
    Draw one element as the polygon enclosed by its boundaries, colored by its change classes.
    Elements with more than one class are filled with the first color and striped with the second.
    """
    ring = geometry.ring()
    face = CHANGE_COLORS[classes[0]] if classes else UNCHANGED_COLOR
    edge = CHANGE_COLORS[classes[1]] if len(classes) > 1 else face
    patch = PolygonPatch(
        ring,
        closed=True,
        facecolor=to_rgba(face, alpha),
        edgecolor=edge,
        hatch="///" if len(classes) > 1 else None,
        linewidth=linewidth,
        zorder=2 if kind is ElementKind.PEDESTRIAN_CROSSING else 1,
    )
    patch.set_gid(gid)
    ax.add_patch(patch)
    if kind is ElementKind.LANE_SEGMENT:
        c = geometry.centerline.xy
        ax.plot(c[:, 0], c[:, 1], color="#404040", linewidth=0.4, linestyle=":", zorder=3)


def _element_gid(kind: ElementKind, i: Union[int, str], classes: Sequence[str]) -> str:
    return f"{_KIND_PREFIX[kind]}-{i}-{'+'.join(classes) if classes else 'unchanged'}"


def _bounds(points: list[np.ndarray], extent: Optional[float]) -> tuple[float, float, float, float]:
    if points:
        xy = np.vstack(points)
        lo, hi = xy.min(axis=0), xy.max(axis=0)
    else:
        lo = hi = np.zeros(2)
    if extent is not None or not points:
        half = (extent if extent is not None else DEFAULT_EXTENT) / 2.0
        center = 0.5 * (lo + hi)
        return center[0] - half, center[1] - half, center[0] + half, center[1] + half
    pad = 2.0
    return lo[0] - pad, lo[1] - pad, hi[0] + pad, hi[1] + pad


def render_svg(
    source: Union[MapScene, FrameSample],
    changes: Optional[ChangeSet] = None,
    *,
    extent: Optional[float] = None,
    figsize: tuple[float, float] = (8.0, 8.0),
) -> bytes:
    """
    Render a scene or a frame as SVG, color coding change classes: purple marking, light green
    insertion, red deletion, dark green geometry; unchanged elements are gray and elements with
    several classes are striped. Each element is one SVG group with the id
    `<ls|pc>-<id>-<classes>`, and the frame box has the id `frame`.

    :param source: a scene (classes from `changes` when given, else from change_hist) or a frame
                    (ground truth colored by label, predictions drawn as black outlines)
    :param changes: optional change set; its deletions are drawn from their stored elements
    :param extent: side of the frame box in meters, centered on the drawing. By default, the
                    bounding box of the drawing with a small margin
    :param figsize: figure width and height in inches
    :return: SVG bytes; equal inputs give equal bytes
    """
    fig = Figure(figsize=figsize)
    ax = fig.add_subplot(1, 1, 1)
    points = []

    if isinstance(source, FrameSample):
        for k, g in enumerate(source.ground_truth):
            classes = change_classes(g.change_hist)
            gid = _element_gid(g.kind, g.element_id if g.element_id is not None else f"gt{k}", classes)
            paint_element(ax, g.kind, g.geometry, classes, gid)
            points.append(g.geometry.ring())
        for k, p in enumerate(source.predictions):
            ring = p.geometry.ring()
            outline = PolygonPatch(ring, closed=True, fill=False, edgecolor=PREDICTION_COLOR, linewidth=0.6, zorder=4)
            outline.set_gid(f"pred-{k}")
            ax.add_patch(outline)
            points.append(ring)
    else:
        by_id = _classes_from_changes(changes) if changes is not None else {}
        elements: list[MapElement] = source.elements()
        if changes is not None:
            elements += [c.element for c in changes.deletions if c.target_id not in source]
        for e in sorted(elements, key=lambda e: e.id):
            classes = by_id.get(e.id, ()) if changes is not None else change_classes(e.change_hist)
            paint_element(ax, e.kind, e.geometry, classes, _element_gid(e.kind, e.id, classes))
            points.append(e.geometry.ring())

    x0, y0, x1, y1 = _bounds(points, extent)
    frame = Rectangle((x0, y0), x1 - x0, y1 - y0, fill=False, edgecolor="#000000", linewidth=1.0, zorder=5)
    frame.set_gid("frame")
    ax.add_patch(frame)
    ax.set_xlim(x0, x1)
    ax.set_ylim(y0, y1)
    ax.set_aspect("equal")
    ax.set_axis_off()

    buf = io.BytesIO()
    with mpl.rc_context({"svg.hashsalt": "map_delta", "svg.fonttype": "none", "hatch.linewidth": 0.8}):
        fig.savefig(buf, format="svg", metadata={"Date": None})
    return buf.getvalue()
