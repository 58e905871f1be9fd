import functools
import json
import logging
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path
from typing import Callable, List

import click

from map_delta.canonical import classify_macro, validate_canonical
from map_delta.codec import (
    load_poses,
    parse_changeset,
    parse_map,
    serialize_changeset,
    serialize_map,
)
from map_delta.diff import apply_changeset, diff_maps, invert_changeset
from map_delta.draw import render_svg
from map_delta.errors import MapDeltaError
from map_delta.evaluate import (
    CLASS_SETS,
    EvalConfig,
    EvalReport,
    evaluate,
    format_gap,
    format_report,
    gap_compare,
    ground_truth_frame,
    merge_frames,
    read_frames,
    write_frames,
)
from map_delta.merge import MergePolicy, merge_elements, unify_crossing_orientation
from map_delta.patch import PATCH_EXTENT, crop_patch
from map_delta.priors import RuleBasedConfig, perturb_continuous, perturb_discrete, perturb_rulebased
from map_delta.stats import count_entry, load_manifest, merge_counts
from map_delta.validate import validate_scene

logger = logging.getLogger(__name__)


def reports_errors(f: Callable) -> Callable:
    """Turn library and I/O errors into a click error message and a nonzero exit code."""

    @functools.wraps(f)
    def wrapper(*args, **kwargs):
        try:
            return f(*args, **kwargs)
        except (MapDeltaError, ValueError, OSError) as e:
            raise click.ClickException(f"{type(e).__name__}: {e}") from e

    return wrapper


def fan_out(fn: Callable, items: List, jobs: int) -> List:
    """Map fn over items with `jobs` worker processes; results keep the input order."""
    if jobs <= 1 or len(items) <= 1:
        return [fn(i) for i in items]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(fn, items))


def read_map(path: str):
    return parse_map(Path(path).read_bytes())


def read_changes(path: str):
    return parse_changeset(Path(path).read_bytes())


def write_json(out, doc):
    out.write((json.dumps(doc, sort_keys=True, indent=2) + "\n").encode("utf-8"))


@click.group()
@click.option("-v", "--verbose", count=True, help="Log more; repeat for debug output")
def cli(verbose):
    """
    Build, check, perturb and score change-annotated HD maps.
    Finer control is available through the `map_delta` package.
    """
    level = logging.WARNING if verbose == 0 else logging.INFO if verbose == 1 else logging.DEBUG
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")


# ---------------------------------------------------------------------------- maps


def _validate_file(path: str, unified: bool) -> tuple[str, str, bool]:
    try:
        report = validate_scene(read_map(path), orientation_unified=unified)
    except MapDeltaError as e:
        return path, f"[error] {type(e).__name__}: {e}", False
    return path, report.format(), report.ok


@cli.command()
@click.argument("maps", nargs=-1, required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--unified", is_flag=True, help="Treat clockwise crossings as errors instead of warnings")
@click.option("--jobs", type=click.IntRange(min=1), default=1, help="Number of worker processes")
def validate(maps, unified, jobs):
    """Check map files against every scene invariant. Exits with 1 if any file has errors."""
    results = fan_out(functools.partial(_validate_file, unified=unified), list(maps), jobs)
    for path, text, _ in results:
        click.echo(f"{path}:")
        click.echo(text)
    if not all(ok for _, _, ok in results):
        raise click.exceptions.Exit(1)


@cli.command()
@click.argument("prior", type=click.Path(exists=True, dir_okay=False))
@click.argument("gt", type=click.Path(exists=True, dir_okay=False))
@click.option("--out", type=click.File("wb"), default="-", help="Change set file. By default, stdout")
@click.option("--check", is_flag=True, help="Also print the macro-modifications and canonical-form findings to stderr")
@reports_errors
def diff(prior, gt, out, check):
    """Compute the change set that turns PRIOR into GT."""
    prior, gt = read_map(prior), read_map(gt)
    cs = diff_maps(prior, gt)
    out.write(serialize_changeset(cs))
    if check:
        macros = sorted(str(m) for m in classify_macro(cs, prior, gt))
        click.echo(f"macro-modifications: {', '.join(macros) or 'none'}", err=True)
        click.echo(validate_canonical(cs, prior, gt).format(), err=True)


@cli.command()
@click.argument("base", type=click.Path(exists=True, dir_okay=False))
@click.argument("changes", type=click.Path(exists=True, dir_okay=False))
@click.option("--out", type=click.File("wb"), default="-", help="Map file. By default, stdout")
@click.option("--no-history", is_flag=True, help="Do not record applied changes in change_hist")
@reports_errors
def apply(base, changes, out, no_history):
    """Apply the change set CHANGES to the map BASE."""
    out.write(serialize_map(apply_changeset(read_map(base), read_changes(changes), record_history=not no_history)))


@cli.command()
@click.argument("changes", type=click.Path(exists=True, dir_okay=False))
@click.option("--base", type=click.Path(exists=True, dir_okay=False), help="Map the change set applies to, to check it")
@click.option("--out", type=click.File("wb"), default="-", help="Change set file. By default, stdout")
@reports_errors
def invert(changes, base, out):
    """Invert a change set: insertions become deletions and before/after values swap."""
    out.write(serialize_changeset(invert_changeset(read_changes(changes), read_map(base) if base else None)))


@cli.command()
@click.argument("gt", type=click.Path(exists=True, dir_okay=False))
@click.option(
    "--mode",
    type=click.Choice(["continuous", "discrete", "rulebased"], case_sensitive=False),
    default="rulebased",
    help="Perturbation regime",
)
@click.option("--seed", type=int, default=0, help="RNG seed")
@click.option("--sigma", type=float, default=0.5, help="Noise standard deviation in meters (continuous, discrete)")
@click.option("--p-del", type=float, default=0.2, help="Deletion probability (discrete)")
@click.option("--p-shift", type=float, default=0.2, help="Shift probability (discrete)")
@click.option("--poses", type=click.Path(exists=True, dir_okay=False), help="Ego trajectory (rulebased)")
@click.option("--config", type=click.Path(exists=True, dir_okay=False), help="RuleBasedConfig JSON file (rulebased)")
@click.option("--out", type=click.File("wb"), default="-", help="Prior map file. By default, stdout")
@click.option("--changes", type=click.File("wb"), help="Where to write the change set that restores GT")
@reports_errors
def perturb(gt, mode, seed, sigma, p_del, p_shift, poses, config, out, changes):
    """Derive a synthetic prior from the ground-truth map GT."""
    gt = read_map(gt)
    cs = None
    if mode == "continuous":
        prior = perturb_continuous(gt, sigma, seed)
    elif mode == "discrete":
        prior, cs = perturb_discrete(gt, p_del, p_shift, sigma, seed)
    else:
        if poses is None:
            raise click.UsageError("--poses is required with --mode rulebased")
        cfg = RuleBasedConfig.load(config) if config else RuleBasedConfig()
        prior, cs = perturb_rulebased(gt, load_poses(Path(poses).read_bytes()), cfg, seed)

    out.write(serialize_map(prior))
    if changes is not None:
        if cs is None:
            logger.warning("continuous noise has no change set; nothing written to --changes")
        else:
            changes.write(serialize_changeset(cs))


@cli.command()
@click.argument("map_file", type=click.Path(exists=True, dir_okay=False))
@click.option("--policy", type=click.Path(exists=True, dir_okay=False), help="MergePolicy JSON file")
@click.option("--no-unify", is_flag=True, help="Skip unifying the orientation of pedestrian crossings")
@click.option("--out", type=click.File("wb"), default="-", help="Map file. By default, stdout")
@reports_errors
def merge(map_file, policy, no_unify, out):
    """Merge consecutive lane segments with equal properties and unify crossing orientation."""
    policy = MergePolicy.from_dict(json.loads(Path(policy).read_text(encoding="utf-8"))) if policy else MergePolicy()
    scene = merge_elements(read_map(map_file), policy)
    if not no_unify:
        scene = unify_crossing_orientation(scene)
    out.write(serialize_map(scene))


@cli.command()
@click.argument("map_file", type=click.Path(exists=True, dir_okay=False))
@click.option("--poses", type=click.Path(exists=True, dir_okay=False), required=True, help="Ego poses, one patch each")
@click.option("--extent", type=float, default=PATCH_EXTENT, show_default=True, help="Patch side in meters")
@click.option("--ego", is_flag=True, help="Write patches in the ego frame instead of world coordinates")
@click.option("--out-dir", type=click.Path(file_okay=False), required=True, help="Directory for the patch files")
@reports_errors
def crop(map_file, poses, extent, ego, out_dir):
    """Cut one square patch around every pose; files are named <scene_id>_<timestamp>.json."""
    scene = read_map(map_file)
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    for pose in load_poses(Path(poses).read_bytes()):
        patch = crop_patch(scene, pose, extent, ego_frame=ego)
        (out_dir / f"{scene.scene_id or 'scene'}_{pose.timestamp}.json").write_bytes(serialize_map(patch))


# ---------------------------------------------------------------------------- evaluation


@cli.command()
@click.argument("prior", type=click.Path(exists=True, dir_okay=False))
@click.argument("gt", type=click.Path(exists=True, dir_okay=False))
@click.option("--poses", type=click.Path(exists=True, dir_okay=False), required=True, help="Ego poses, one frame each")
@click.option("--changes", type=click.Path(exists=True, dir_okay=False), help="Change set; computed with diff when omitted")
@click.option("--extent", type=float, default=PATCH_EXTENT, show_default=True, help="Frame side in meters")
@click.option("--out", type=click.File("w"), default="-", help="Frames file (JSON lines). By default, stdout")
@reports_errors
def frames(prior, gt, poses, changes, extent, out):
    """Write the labelled ground truth of every frame along the poses."""
    prior, gt = read_map(prior), read_map(gt)
    cs = read_changes(changes) if changes else diff_maps(prior, gt)
    out.write(write_frames(ground_truth_frame(prior, gt, cs, pose, extent) for pose in load_poses(Path(poses).read_bytes())))


@cli.command(name="eval")
@click.option("--pred", type=click.Path(exists=True, dir_okay=False), required=True, help="Predicted frames (JSON lines)")
@click.option("--gt", type=click.Path(exists=True, dir_okay=False), required=True, help="Ground-truth frames (JSON lines)")
@click.option(
    "--classes",
    type=click.Choice(sorted(CLASS_SETS), case_sensitive=False),
    default="full",
    show_default=True,
    help="full: insertion, deletion, geometry, marking; binary: changed, unchanged",
)
@click.option("--conf-threshold", type=click.FloatRange(0.0, 1.0), default=0.5, show_default=True)
@click.option("--json", "json_out", type=click.File("wb"), help="Also write the report as JSON")
@reports_errors
def eval_(pred, gt, classes, conf_threshold, json_out):
    """Score predicted frames against ground truth with mAPC and mACC. The exit code does not depend on the scores."""
    merged = merge_frames(read_frames(Path(pred).read_text(encoding="utf-8")), read_frames(Path(gt).read_text(encoding="utf-8")))
    report = evaluate(merged, EvalConfig(conf_threshold=conf_threshold, classes=CLASS_SETS[classes]))
    click.echo(format_report(report))
    if json_out is not None:
        write_json(json_out, report.to_dict())


@cli.command()
@click.argument("val_report", type=click.Path(exists=True, dir_okay=False))
@click.argument("test_report", type=click.Path(exists=True, dir_okay=False))
@reports_errors
def gap(val_report, test_report):
    """Difference of every score between a validation and a test report (test minus validation)."""

    def load(path):
        return EvalReport.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))

    click.echo(format_gap(gap_compare(load(val_report), load(test_report))))


@cli.command()
@click.argument("manifest", type=click.Path(exists=True, dir_okay=False))
@click.option("--extent", type=float, default=PATCH_EXTENT, show_default=True, help="Frame side in meters")
@click.option("--jobs", type=click.IntRange(min=1), default=1, help="Number of worker processes")
@click.option("--json", "as_json", is_flag=True, help="Print JSON instead of a table")
@reports_errors
def stats(manifest, extent, jobs, as_json):
    """Count changes at scene, frame and element level for every split of a manifest."""
    entries = load_manifest(manifest)
    table = merge_counts(fan_out(functools.partial(count_entry, extent=extent), entries, jobs))
    if as_json:
        click.echo(json.dumps(table.to_dict(), sort_keys=True, indent=2))
    else:
        click.echo(table.format())


@cli.command()
@click.argument("source", type=click.Path(exists=True, dir_okay=False))
@click.option("--changes", type=click.Path(exists=True, dir_okay=False), help="Color by this change set instead of change_hist")
@click.option("--frame", "frame_index", type=int, help="Treat SOURCE as a frames file and draw the frame at this index")
@click.option("--extent", type=float, help="Side of the drawn square in meters")
@click.option("--out", type=click.File("wb"), default="-", help="SVG file. By default, stdout")
@reports_errors
def render(source, changes, frame_index, extent, out):
    """Draw a map or a frame as SVG with color-coded change classes."""
    if frame_index is not None:
        frames_ = read_frames(Path(source).read_text(encoding="utf-8"))
        if not 0 <= frame_index < len(frames_):
            raise click.BadParameter(f"{source} has {len(frames_)} frames", param_hint="--frame")
        out.write(render_svg(frames_[frame_index], extent=extent))
    else:
        out.write(render_svg(read_map(source), read_changes(changes) if changes else None, extent=extent))
