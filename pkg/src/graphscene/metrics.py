"""Evaluation metrics: per-relationship geometric constraint accuracy,
generation diversity, top-K recall, and rule-based cycle consistency."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .geometry import box_iou, chamfer, footprint_intersection_area

RULE_PREDICATES = (
    "left of", "right of", "front of", "behind of",
    "higher than", "lower than", "smaller than", "bigger than", "same as",
)
SUPPORT_PREDICATE = "standing on"


class MetricError(ValueError):
    pass


def _top_z(box):
    return box.cz + box.h / 2.0


def _top_z_literal(box):
    # the printed form of the higher/lower rule; kept selectable for
    # comparison even though the top-of-box reading is the default
    return box.h + box.cz / 2.0


def constraint_check(predicate, box_i, box_j, higher_literal=False):
    """Evaluate one geometric relationship rule on a pair of boxes.

    left/right and front/behind compare centroids with an IoU < 0.5 guard;
    higher/lower compare box tops; smaller/bigger compare volumes; same
    compares zero-centered IoU. Raises for predicates without a rule.
    """
    if predicate not in RULE_PREDICATES:
        raise MetricError(f"predicate {predicate!r} is not rule-checkable")
    if predicate == "left of":
        return box_i.cx < box_j.cx and box_iou(box_i, box_j) < 0.5
    if predicate == "right of":
        return box_i.cx > box_j.cx and box_iou(box_i, box_j) < 0.5
    if predicate == "front of":
        return box_i.cy < box_j.cy and box_iou(box_i, box_j) < 0.5
    if predicate == "behind of":
        return box_i.cy > box_j.cy and box_iou(box_i, box_j) < 0.5
    top = _top_z_literal if higher_literal else _top_z
    if predicate == "higher than":
        return top(box_i) > top(box_j)
    if predicate == "lower than":
        return top(box_i) < top(box_j)
    if predicate == "smaller than":
        return box_i.volume < box_j.volume
    if predicate == "bigger than":
        return box_i.volume > box_j.volume
    return box_iou(box_i, box_j, zero_centered=True) > 0.5  # same as


def is_standing_on(box_i, box_j, tol=1e-4):
    """Support detection: i rests on j when its bottom touches j's top and
    most of its footprint lies over j."""
    if abs(box_i.bottom - box_j.top) > tol:
        return False
    overlap = footprint_intersection_area(box_i, box_j)
    return overlap >= 0.5 * box_i.w * box_i.l


@dataclass
class ConstraintReport:
    per_predicate: dict = field(default_factory=dict)
    counts: dict = field(default_factory=dict)
    total: float = float("nan")

    def to_dict(self):
        return {"per_predicate": dict(self.per_predicate),
                "counts": dict(self.counts), "total": self.total}


def constraint_accuracy(scene, g, vocab, higher_literal=False):
    """Fraction of rule-checkable edges whose rule holds on the scene boxes,
    reported per predicate class and as the unweighted class mean."""
    hits = {}
    counts = {}
    boxes = [o.box for o in scene.objects]
    src, dst, pred = g.edge_arrays()
    for a, b, p in zip(src, dst, pred):
        name = vocab.predicate_names[p]
        if name not in RULE_PREDICATES:
            continue
        ok = constraint_check(name, boxes[a], boxes[b], higher_literal=higher_literal)
        hits[name] = hits.get(name, 0) + (1 if ok else 0)
        counts[name] = counts.get(name, 0) + 1
    per = {name: hits[name] / counts[name] for name in counts}
    total = float(np.mean(list(per.values()))) if per else float("nan")
    return ConstraintReport(per_predicate=per, counts=counts, total=total)


@dataclass
class DiversityReport:
    std_size: float
    std_location: float
    std_angle: float
    shape_chamfer: float

    def to_dict(self):
        return {"std_size": self.std_size, "std_location": self.std_location,
                "std_angle": self.std_angle, "shape_chamfer": self.shape_chamfer}


def diversity(sample, g, n=10, rng=None):
    """Spread among n scenes generated for the same graph: per-node standard
    deviation of each box parameter averaged within the size / location /
    angle groups, plus mean chamfer distance between consecutive samples'
    decoded clouds."""
    rng = np.random.default_rng(rng) if not isinstance(rng, np.random.Generator) else rng
    scenes = [sample(g, rng) for _ in range(n)]
    boxes = np.stack([s.boxes7() for s in scenes])  # (n, N, 7)
    if n < 2:
        return DiversityReport(0.0, 0.0, 0.0, 0.0)
    std = boxes.std(axis=0)  # per node, per parameter
    std[np.ptp(boxes, axis=0) == 0.0] = 0.0  # identical samples are exactly zero spread
    chamfers = []
    for a, b in zip(scenes[:-1], scenes[1:]):
        for oa, ob in zip(a.objects, b.objects):
            if oa.points is not None and ob.points is not None:
                chamfers.append(chamfer(oa.points, ob.points))
    return DiversityReport(
        std_size=float(std[:, 0:3].mean()),
        std_location=float(std[:, 3:6].mean()),
        std_angle=float(std[:, 6].mean()),
        shape_chamfer=float(np.mean(chamfers)) if chamfers else 0.0,
    )


def topk_recall(scores, truths, k):
    """Fraction of items whose true label ranks within the top k scores.

    Ties are inclusive: an item is a hit when fewer than k classes score
    strictly higher than the truth.
    """
    if k < 1:
        raise MetricError("k must be at least 1")
    scores = np.asarray(scores, dtype=np.float64)
    truths = np.asarray(truths, dtype=np.int64)
    if scores.ndim != 2 or truths.shape != (scores.shape[0],):
        raise MetricError(f"scores {scores.shape} and truths {truths.shape} misaligned")
    if scores.shape[0] == 0:
        return float("nan")
    true_scores = scores[np.arange(len(truths)), truths]
    better = (scores > true_scores[:, None]).sum(axis=1)
    return float((better < k).mean())


def triplet_scores(obj_scores_i, pred_scores, obj_scores_j):
    """Joint score table over (object_i, predicate, object_j) label combos:
    the product of the two object scores and the predicate score."""
    return np.einsum("a,b,c->abc", obj_scores_i, pred_scores, obj_scores_j)


class RuleBasedPredictor:
    """Deterministic stand-in for a neural scene-graph predictor: objects are
    scored by proximity of the box size to per-category priors, predicates by
    their geometric rules (1/0), support by the touch test."""

    def __init__(self, vocab, size_priors, bandwidth=0.35):
        self.vocab = vocab
        self.bandwidth = bandwidth
        self.prior_sizes = np.stack([
            np.asarray(size_priors[name], dtype=np.float64)
            for name in vocab.object_names
        ])

    def object_scores(self, scene):
        sizes = np.stack([o.box.size for o in scene.objects])
        d2 = ((sizes[:, None, :] - self.prior_sizes[None, :, :]) ** 2).sum(axis=2)
        raw = np.exp(-d2 / (2.0 * self.bandwidth ** 2))
        raw += 1e-12
        return raw / raw.sum(axis=1, keepdims=True)

    def predicate_scores(self, scene, pairs):
        """One score row over the predicate vocabulary per (i, j) node pair."""
        boxes = [o.box for o in scene.objects]
        out = np.zeros((len(pairs), self.vocab.num_predicates))
        for row, (i, j) in enumerate(pairs):
            for p, name in enumerate(self.vocab.predicate_names):
                if name in RULE_PREDICATES:
                    out[row, p] = 1.0 if constraint_check(name, boxes[i], boxes[j]) else 0.0
                elif name == SUPPORT_PREDICATE:
                    out[row, p] = 1.0 if is_standing_on(boxes[i], boxes[j]) else 0.0
            if out[row].sum() == 0:
                out[row] = 1.0 / self.vocab.num_predicates
            else:
                out[row] /= out[row].sum()
        return out


def cycle_consistency(g, scene, predictor, object_ks=(1, 5, 10),
                      predicate_ks=(1, 3, 5), triplet_ks=(1, 50, 100)):
    """Re-predict the scene graph from a generated scene and measure top-K
    recall of objects, predicates and full triplets against the input graph."""
    vocab = predictor.vocab
    obj_scores = predictor.object_scores(scene)
    obj_truth = g.categories()
    src, dst, pred = g.edge_arrays()
    pairs = list(zip(src, dst))
    pred_scores = predictor.predicate_scores(scene, pairs)

    report = {"objects": {}, "predicates": {}, "triplets": {}}
    for k in object_ks:
        report["objects"][f"top{k}"] = topk_recall(obj_scores, obj_truth, min(k, vocab.num_objects))
    for k in predicate_ks:
        report["predicates"][f"top{k}"] = topk_recall(pred_scores, pred,
                                                      min(k, vocab.num_predicates))

    geo_rows = [r for r, p in enumerate(pred) if vocab.predicate_names[p] in RULE_PREDICATES]
    if geo_rows:
        report["predicate_top1_geometric"] = topk_recall(
            pred_scores[geo_rows], pred[geo_rows], 1)
    else:
        report["predicate_top1_geometric"] = float("nan")

    if len(pairs):
        hits = {k: 0 for k in triplet_ks}
        for row, (i, j) in enumerate(pairs):
            table = triplet_scores(obj_scores[i], pred_scores[row], obj_scores[j])
            truth_score = table[obj_truth[i], pred[row], obj_truth[j]]
            better = int((table > truth_score).sum())
            for k in triplet_ks:
                if better < k:
                    hits[k] += 1
        for k in triplet_ks:
            report["triplets"][f"top{k}"] = hits[k] / len(pairs)
    else:
        for k in triplet_ks:
            report["triplets"][f"top{k}"] = float("nan")
    return report
