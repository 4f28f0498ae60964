"""Command-line entry points: dataset synthesis, the box-extraction pipeline
for raw point clouds, training, generation, manipulation, evaluation, and the
studio service. Every subcommand is deterministic under --seed."""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from .documents import read_scene, scene_to_dict, write_scene
from .estimator import SceneGenerator
from .geometry import (
    GeometryError,
    canonical_front,
    min_area_obb,
    ransac_plane,
    read_pointcloud,
    refine_support,
)
from .metrics import RuleBasedPredictor, constraint_accuracy, cycle_consistency, diversity
from .model import Scene, SceneObject
from .scenegraph import (
    GraphError,
    Vocabulary,
    change_from_dict,
    read_graph,
    validate_graph,
)
from .synthdata import SynthConfig, default_vocabulary, load_split, make_dataset, prior_mean_sizes


def _read_json(path):
    return json.loads(Path(path).read_text(encoding="utf-8"))


def _write_json(path, doc):
    Path(path).write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def _load_vocab(path):
    if path is None:
        return default_vocabulary()
    return Vocabulary.from_dict(_read_json(path))


def cmd_synth(args):
    cfg = SynthConfig(num_scenes=args.num_scenes, min_objects=args.min_objects,
                      max_objects=args.max_objects, room=args.room, seed=args.seed)
    out = make_dataset(cfg, args.out)
    print(f"wrote {cfg.num_scenes} scenes to {out}")
    return 0


def _object_points(entry, base_dir):
    if "points" in entry:
        return np.asarray(entry["points"], dtype=np.float64)
    if "points_file" in entry:
        return read_pointcloud((base_dir / entry["points_file"]).read_bytes())
    raise GeometryError(f"object {entry.get('id')} has neither points nor points_file")


def _support_top(job, boxes, points_by_id, child_id, parent, args, rng):
    if parent != "plane":
        return boxes[parent].top
    # fit the ground plane in a neighbourhood around the child's footprint
    world = np.asarray(job["world_points"], dtype=np.float64)
    child = boxes[child_id]
    near = world[
        np.hypot(world[:, 0] - child.cx, world[:, 1] - child.cy)
        <= max(child.w, child.l) / 2.0 + args.neighbourhood]
    if len(near) < 3:
        raise GeometryError(f"not enough world points near object {child_id} for a plane fit")
    plane = ransac_plane(near, iterations=args.ransac_iterations,
                         inlier_threshold=args.inlier_threshold, rng=rng)
    if abs(plane.nz) < 1e-6:
        raise GeometryError("support plane is vertical; cannot infer a top height")
    return -(plane.d + plane.nx * child.cx + plane.ny * child.cy) / plane.nz


def cmd_prep(args):
    """Box-extraction pipeline: minimum-area boxes, canonical fronts, then
    support refinement against parent boxes or a RANSAC-fitted plane."""
    job = _read_json(args.input)
    vocab = _load_vocab(args.vocab)
    base_dir = Path(args.input).parent
    rng = np.random.default_rng(args.seed)
    boxes, points_by_id, meta = {}, {}, {}
    for entry in job["objects"]:
        pts = _object_points(entry, base_dir)
        _alpha_hat, box = min_area_obb(pts)
        box = canonical_front(box, pts, category=int(entry.get("annotation_category", 1)),
                              manual_choice=entry.get("manual_choice"))
        boxes[entry["id"]] = box
        points_by_id[entry["id"]] = pts
        meta[entry["id"]] = entry
    for support in job.get("supports", []):
        child = support["child"]
        top = _support_top(job, boxes, points_by_id, child, support["parent"], args, rng)
        boxes[child] = refine_support(boxes[child], top)
    objects = [
        SceneObject(node_id=entry["id"],
                    category_id=vocab.object_id(entry["category"]),
                    box=boxes[entry["id"]])
        for entry in job["objects"]
    ]
    Path(args.out).write_bytes(write_scene(Scene(objects=objects), vocab))
    print(f"prepared {len(objects)} boxes -> {args.out}")
    return 0


def cmd_train(args):
    pairs, vocab = load_split(args.data, "train")
    est = SceneGenerator(epochs=args.epochs, batch_size=args.batch_size, lr=args.lr,
                         seed=args.seed, feature_width=args.feature_width,
                         latent_width=args.feature_width // 2)

    def progress(epoch, losses):
        print(f"epoch {epoch:3d}  total {losses.total:8.4f}  "
              f"recon {losses.recon_box + losses.recon_angle + losses.recon_shape:8.4f}",
              flush=True)

    est.fit(pairs, vocab=vocab, log_path=args.log, progress=progress if args.verbose else None)
    est.save(args.out)
    print(f"checkpoint -> {args.out}")
    return 0


def cmd_generate(args):
    est = SceneGenerator.load(args.checkpoint)
    g = read_graph(Path(args.graph).read_bytes(), est.vocab_)
    scene = est.generate(g, seed=args.seed, n_points=args.points)
    _write_json(args.out, scene_to_dict(scene, est.vocab_, include_points=not args.no_points))
    print(f"scene with {len(scene)} objects -> {args.out}")
    return 0


def cmd_manipulate(args):
    est = SceneGenerator.load(args.checkpoint)
    g = read_graph(Path(args.graph).read_bytes(), est.vocab_)
    scene = read_scene(Path(args.scene).read_bytes(), est.vocab_)
    change = change_from_dict(_read_json(args.change), g, est.vocab_)
    out, changed_ids = est.manipulate(g, scene, change, seed=args.seed, n_points=args.points)
    doc = scene_to_dict(out, est.vocab_, include_points=not args.no_points)
    doc["changed_ids"] = changed_ids
    _write_json(args.out, doc)
    print(f"changed objects: {changed_ids} -> {args.out}")
    return 0


def cmd_evaluate(args):
    pairs, vocab = load_split(args.data, args.split)
    predictor = RuleBasedPredictor(vocab, prior_mean_sizes())
    rng = np.random.default_rng(args.seed)
    report = {"split": args.split, "num_scenes": len(pairs)}

    if args.checkpoint:
        est = SceneGenerator.load(args.checkpoint)
        totals, cycles = [], []
        for i, (g, _scene) in enumerate(pairs):
            generated = est.generate(g, seed=args.seed + i)
            acc = constraint_accuracy(generated, g, vocab)
            if not np.isnan(acc.total):
                totals.append(acc.total)
            cycles.append(cycle_consistency(g, generated, predictor)["predicate_top1_geometric"])
        report["constraint_total"] = float(np.mean(totals)) if totals else None
        report["cycle_predicate_top1"] = float(np.nanmean(cycles)) if cycles else None
        if args.diversity and pairs:
            g0 = pairs[0][0]
            div = diversity(lambda g, r: est.generate(g, seed=int(r.integers(2 ** 31)),
                                                      n_points=64), g0, n=10, rng=rng)
            report["diversity"] = div.to_dict()
    else:
        totals, cycles = [], []
        for g, scene in pairs:
            acc = constraint_accuracy(scene, g, vocab)
            if not np.isnan(acc.total):
                totals.append(acc.total)
            cycles.append(cycle_consistency(g, scene, predictor)["predicate_top1_geometric"])
        report["constraint_total"] = float(np.mean(totals)) if totals else None
        report["cycle_predicate_top1"] = float(np.nanmean(cycles)) if cycles else None

    _write_json(args.out, report)
    print(json.dumps(report, indent=2, sort_keys=True))
    return 0


def cmd_serve(args):
    from .service import serve
    return serve(args.checkpoint, host=args.host, port=args.port)


def build_parser():
    parser = argparse.ArgumentParser(
        prog="graphscene",
        description="scene generation and manipulation from semantic scene graphs")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic dataset")
    p.add_argument("--out", required=True)
    p.add_argument("--num-scenes", type=int, default=100)
    p.add_argument("--min-objects", type=int, default=3)
    p.add_argument("--max-objects", type=int, default=8)
    p.add_argument("--room", type=float, default=4.0)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("prep", help="extract oriented boxes from point clouds")
    p.add_argument("--input", required=True, help="prep job JSON document")
    p.add_argument("--out", required=True)
    p.add_argument("--vocab", default=None)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--ransac-iterations", type=int, default=256)
    p.add_argument("--inlier-threshold", type=float, default=0.02)
    p.add_argument("--neighbourhood", type=float, default=0.5)
    p.set_defaults(func=cmd_prep)

    p = sub.add_parser("train", help="train on a synthesized dataset")
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--epochs", type=int, default=100)
    p.add_argument("--batch-size", type=int, default=8)
    p.add_argument("--lr", type=float, default=0.001)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--feature-width", type=int, default=128)
    p.add_argument("--log", default=None)
    p.add_argument("--verbose", action="store_true")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("generate", help="generate a scene for a graph")
    p.add_argument("--graph", required=True)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--points", type=int, default=256)
    p.add_argument("--no-points", action="store_true")
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("manipulate", help="apply a graph change to a scene")
    p.add_argument("--graph", required=True)
    p.add_argument("--scene", required=True)
    p.add_argument("--change", required=True)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--points", type=int, default=256)
    p.add_argument("--no-points", action="store_true")
    p.set_defaults(func=cmd_manipulate)

    p = sub.add_parser("evaluate", help="run the metric suite on a split")
    p.add_argument("--data", required=True)
    p.add_argument("--split", default="val", choices=("train", "val"))
    p.add_argument("--checkpoint", default=None)
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--diversity", action="store_true")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("serve", help="run the studio JSON service")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8765)
    p.set_defaults(func=cmd_serve)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (GraphError, GeometryError, ValueError, FileNotFoundError) as err:
        print(f"error: {err}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
