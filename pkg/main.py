from pathlib import Path

from map_delta import apply_changeset, diff_maps, parse_map, perturb_rulebased
from map_delta.codec import load_poses
from map_delta.draw import render_svg
from map_delta.evaluate import evaluate, format_report, ground_truth_frame

if __name__ == "__main__":
    gt = parse_map(Path("assets/example_scene.json").read_bytes())
    poses = load_poses(Path("assets/example_poses.json").read_bytes())

    prior, cs = perturb_rulebased(gt, poses, seed=1)
    assert diff_maps(prior, gt) == cs
    assert apply_changeset(prior, cs).without_change_status() == gt

    # a model that predicts nothing, scored frame by frame
    frames = [ground_truth_frame(prior, gt, cs, pose) for pose in poses]
    print(format_report(evaluate(frames)))

    Path("example_changes.svg").write_bytes(render_svg(gt, cs))
