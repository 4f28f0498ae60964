"""Procedural desk-scale dataset: scenes whose predicate labels are
geometrically consistent by construction.

Every scene gets a floor, furniture with category-dependent size priors and
non-overlapping footprints, optional stacked small objects, superquadric shape
codes, and edges derived from the same geometric rules the evaluation checks.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .documents import write_scene
from .geometry import OrientedBox, footprint_iou
from .metrics import RULE_PREDICATES, SUPPORT_PREDICATE, constraint_check, is_standing_on
from .model import Scene, SceneObject
from .scenegraph import EdgeTriplet, ObjectNode, SceneGraph, Vocabulary, write_graph
from .shapecodec import EXTENT_RANGE, PrimitiveParams, ShapeCodec

DEFAULT_OBJECTS = ("floor", "table", "desk", "chair", "sofa", "bed",
                   "cabinet", "shelf", "lamp", "pillow", "box", "plant")
DEFAULT_PREDICATES = RULE_PREDICATES + (SUPPORT_PREDICATE,)

# per category: ((w_lo, w_hi), (l_lo, l_hi), (h_lo, h_hi)), placement role,
# and the superquadric exponent ranges. Ranges are wide and overlap across
# categories, like real scan data: most ordered pairs can realize either
# volume or height ordering, which keeps relation edits feasible.
SIZE_PRIORS = {
    "floor":   (((3.0, 3.0), (3.0, 3.0), (0.1, 0.1)), "floor", ((0.2, 0.2), (0.2, 0.2))),
    "table":   (((0.7, 1.5), (0.7, 1.5), (0.5, 0.85)), "surface", ((0.2, 0.4), (0.2, 0.4))),
    "desk":    (((0.9, 1.7), (0.5, 0.95), (0.6, 0.85)), "surface", ((0.2, 0.4), (0.2, 0.4))),
    "chair":   (((0.32, 0.65), (0.32, 0.65), (0.55, 1.05)), "large", ((0.3, 0.7), (0.3, 0.7))),
    "sofa":    (((1.2, 2.3), (0.65, 1.05), (0.6, 1.0)), "surface", ((0.3, 0.7), (0.3, 0.7))),
    "bed":     (((1.1, 2.05), (1.5, 2.25), (0.4, 0.75)), "surface", ((0.3, 0.7), (0.3, 0.7))),
    "cabinet": (((0.4, 1.3), (0.32, 0.65), (0.75, 2.05)), "surface", ((0.2, 0.4), (0.2, 0.4))),
    "shelf":   (((0.45, 1.3), (0.22, 0.42), (0.65, 1.95)), "surface", ((0.2, 0.4), (0.2, 0.4))),
    "lamp":    (((0.12, 0.42), (0.12, 0.42), (0.22, 0.85)), "small", ((0.2, 1.0), (1.0, 2.0))),
    "pillow":  (((0.32, 0.72), (0.22, 0.55), (0.1, 0.28)), "small", ((1.0, 1.6), (1.0, 1.6))),
    "box":     (((0.18, 0.62), (0.18, 0.62), (0.12, 0.62)), "small", ((0.2, 0.4), (0.2, 0.4))),
    "plant":   (((0.14, 0.5), (0.14, 0.5), (0.22, 1.05)), "small", ((0.8, 1.6), (0.8, 1.6))),
}


def default_vocabulary():
    return Vocabulary(DEFAULT_OBJECTS, DEFAULT_PREDICATES, name="synthetic-v1")


def prior_mean_sizes():
    """Mean (w, l, h) per category, used by the rule-based predictor."""
    return {name: np.array([(lo + hi) / 2.0 for lo, hi in ranges])
            for name, (ranges, _role, _expo) in SIZE_PRIORS.items()}


@dataclass
class SynthConfig:
    num_scenes: int = 100
    min_objects: int = 3          # node count per scene, floor included
    max_objects: int = 8
    room: float = 4.0             # room side length in meters
    seed: int = 0
    max_edges_per_node: int = 4
    stack_prob: float = 0.5       # chance a small object goes onto a surface
    duplicate_prob: float = 0.4   # chance to clone an earlier object's size
    footprint_iou_limit: float = 0.3

    def __post_init__(self):
        if not (1 <= self.min_objects <= self.max_objects):
            raise ValueError("invalid object count range")
        if self.num_scenes < 1 or self.room <= 0:
            raise ValueError("num_scenes and room must be positive")

    def to_dict(self):
        return {
            "num_scenes": self.num_scenes, "min_objects": self.min_objects,
            "max_objects": self.max_objects, "room": self.room, "seed": self.seed,
            "max_edges_per_node": self.max_edges_per_node,
            "stack_prob": self.stack_prob, "duplicate_prob": self.duplicate_prob,
            "footprint_iou_limit": self.footprint_iou_limit,
        }


def _sample_size(category, rng):
    ranges, _role, _expo = SIZE_PRIORS[category]
    return np.array([rng.uniform(lo, hi) for lo, hi in ranges])


def _shape_code(codec, category_id, category, size, rng):
    _ranges, _role, (e1_rng, e2_rng) = SIZE_PRIORS[category]
    half = size / 2.0
    half = half * (EXTENT_RANGE[1] / half.max())
    half = np.clip(half, EXTENT_RANGE[0], EXTENT_RANGE[1])
    params = PrimitiveParams(
        category_id=category_id,
        ax=float(half[0]), ay=float(half[1]), az=float(half[2]),
        e1=float(rng.uniform(*e1_rng)), e2=float(rng.uniform(*e2_rng)),
    )
    return codec.encode(params), params


def _place_on_floor(size, alpha, room, placed, iou_limit, rng, tries=1000):
    w, l, h = size
    margin = max(w, l) / 2.0
    lim = room / 2.0 - margin
    if lim <= 0:
        return None
    for _ in range(tries):
        cx, cy = rng.uniform(-lim, lim, size=2)
        box = OrientedBox(w=w, l=l, h=h, cx=cx, cy=cy, cz=h / 2.0, alpha=alpha)
        if all(footprint_iou(box, other) <= iou_limit for other in placed):
            return box
    return None


def _place_on_parent(size, alpha, parent, rng, tries=200):
    w, l, h = size
    reach = 0.5 * float(np.hypot(w, l))  # half-diagonal of the child footprint
    mx = parent.w / 2.0 - reach
    my = parent.l / 2.0 - reach
    if mx <= 0 or my <= 0:
        return None
    lx = rng.uniform(-mx, mx)
    ly = rng.uniform(-my, my)
    a = np.radians(parent.alpha)
    c, s = np.cos(a), np.sin(a)
    cx = parent.cx + c * lx - s * ly
    cy = parent.cy + s * lx + c * ly
    return OrientedBox(w=w, l=l, h=h, cx=cx, cy=cy, cz=parent.top + h / 2.0, alpha=alpha)


def derive_predicates(scene, vocab, max_edges_per_node=4, rng=None):
    """Edges that are true by the geometric rules: support edges always, and
    a bounded random subset of the other true relations per source node."""
    rng = np.random.default_rng(rng) if not isinstance(rng, np.random.Generator) else rng
    boxes = [o.box for o in scene.objects]
    n = len(boxes)
    support_id = vocab.predicate_id(SUPPORT_PREDICATE)
    edges = []
    for i in range(n):
        out_edges = []
        candidates = []
        for j in range(n):
            if i == j:
                continue
            if is_standing_on(boxes[i], boxes[j]):
                out_edges.append(EdgeTriplet(scene.objects[i].node_id,
                                             scene.objects[j].node_id, support_id))
            for name in RULE_PREDICATES:
                if constraint_check(name, boxes[i], boxes[j]):
                    candidates.append(EdgeTriplet(scene.objects[i].node_id,
                                                  scene.objects[j].node_id,
                                                  vocab.predicate_id(name)))
        # sparse like real scan graphs: a handful of the true relations, not all
        want = int(rng.integers(2, 5))
        order = rng.permutation(len(candidates))
        for k in order:
            if len(out_edges) >= max_edges_per_node or want <= 0:
                break
            out_edges.append(candidates[int(k)])
            want -= 1
        edges.extend(out_edges)
    return edges


def synth_scene(cfg, rng, codec=None, vocab=None):
    """One (SceneGraph, Scene) pair; deterministic given the rng state."""
    vocab = vocab or default_vocabulary()
    codec = codec or ShapeCodec(vocab.num_objects)
    rng = np.random.default_rng(rng) if not isinstance(rng, np.random.Generator) else rng
    n_total = int(rng.integers(cfg.min_objects, cfg.max_objects + 1))

    while True:
        objects = _try_build_objects(cfg, rng, codec, vocab, n_total)
        if objects is not None:
            break
        n_total = max(cfg.min_objects, n_total - 1)

    scene = Scene(objects=objects)
    nodes = tuple(ObjectNode(id=o.node_id, category_id=o.category_id) for o in objects)
    edges = derive_predicates(scene, vocab, cfg.max_edges_per_node, rng)
    graph = SceneGraph(nodes=nodes, edges=tuple(edges), vocab_ref=vocab.name)
    return graph, scene


def _try_build_objects(cfg, rng, codec, vocab, n_total):
    floor_cat = vocab.object_id("floor")
    floor_size = np.array([cfg.room, cfg.room, 0.1])
    floor_box = OrientedBox(w=cfg.room, l=cfg.room, h=0.1, cx=0.0, cy=0.0, cz=-0.05)
    code, _ = _shape_code(codec, floor_cat, "floor", floor_size, rng)
    objects = [SceneObject(node_id=0, category_id=floor_cat, box=floor_box, code=code)]
    placed_boxes = []   # everything except the floor
    surfaces = []       # indices into objects able to support small items

    non_floor = [name for name in vocab.object_names if name != "floor"]
    history = []
    for node_id in range(1, n_total):
        if history and rng.uniform() < cfg.duplicate_prob:
            category, size, alpha = history[int(rng.integers(len(history)))]
        else:
            category = non_floor[int(rng.integers(len(non_floor)))]
            size = _sample_size(category, rng)
            alpha = float(rng.uniform(0.0, 360.0))
        cat_id = vocab.object_id(category)
        _ranges, role, _expo = SIZE_PRIORS[category]

        box = None
        if role == "small" and surfaces and rng.uniform() < cfg.stack_prob:
            parent = objects[surfaces[int(rng.integers(len(surfaces)))]]
            box = _place_on_parent(size, alpha, parent.box, rng)
        if box is None:
            box = _place_on_floor(size, alpha, cfg.room, placed_boxes,
                                  cfg.footprint_iou_limit, rng)
        if box is None:
            return None  # placement failed; caller retries with fewer objects

        code, _ = _shape_code(codec, cat_id, category, size, rng)
        objects.append(SceneObject(node_id=node_id, category_id=cat_id, box=box, code=code))
        placed_boxes.append(box)
        history.append((category, size, alpha))
        if role == "surface":
            surfaces.append(len(objects) - 1)
    return objects


def config_hash(cfg):
    payload = json.dumps(cfg.to_dict(), sort_keys=True).encode("utf-8")
    return hashlib.sha256(payload).hexdigest()


def make_dataset(cfg, out_dir, codec=None, vocab=None):
    """Write num_scenes (graph, scene) document pairs under out_dir with a
    90/10 train/val split and a reproducibility manifest."""
    vocab = vocab or default_vocabulary()
    codec = codec or ShapeCodec(vocab.num_objects)
    out = Path(out_dir)
    rng = np.random.default_rng(cfg.seed)
    n_train = max(1, int(round(cfg.num_scenes * 0.9))) if cfg.num_scenes > 1 else 1
    for split in ("train", "val"):
        (out / split).mkdir(parents=True, exist_ok=True)

    for i in range(cfg.num_scenes):
        graph, scene = synth_scene(cfg, rng, codec=codec, vocab=vocab)
        split = "train" if i < n_train else "val"
        stem = out / split / f"scene_{i:05d}"
        stem.with_suffix(".graph.json").write_bytes(write_graph(graph, vocab))
        stem.with_suffix(".scene.json").write_bytes(write_scene(scene, vocab))

    (out / "vocabulary.json").write_text(
        json.dumps(vocab.to_dict(), indent=2, sort_keys=True), encoding="utf-8")
    manifest = {"config": cfg.to_dict(), "seed": cfg.seed, "hash": config_hash(cfg)}
    (out / "manifest.json").write_text(
        json.dumps(manifest, indent=2, sort_keys=True), encoding="utf-8")
    return out


def load_split(dataset_dir, split, vocab=None):
    """Read a split back as (SceneGraph, Scene) pairs in file order."""
    from .documents import read_scene
    from .scenegraph import read_graph

    root = Path(dataset_dir)
    vocab = vocab or Vocabulary.from_dict(
        json.loads((root / "vocabulary.json").read_text(encoding="utf-8")),
        name="synthetic-v1")
    pairs = []
    for graph_path in sorted((root / split).glob("*.graph.json")):
        scene_path = graph_path.with_name(graph_path.name.replace(".graph.", ".scene."))
        g = read_graph(graph_path.read_bytes(), vocab)
        s = read_scene(scene_path.read_bytes(), vocab)
        pairs.append((g, s))
    return pairs, vocab
