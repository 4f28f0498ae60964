"""JSON document formats for scenes (boxes + shape codes + optional clouds),
shared by the dataset, the CLI and the studio service."""

from __future__ import annotations

import json

import numpy as np

from .geometry import OrientedBox
from .model import Scene, SceneObject
from .scenegraph import GraphError


def scene_to_dict(scene, vocab, include_points=True, max_points=None):
    objects = []
    for o in scene.objects:
        entry = {
            "id": o.node_id,
            "category": vocab.object_names[o.category_id],
            "box": o.box.to_dict(),
        }
        if o.code is not None:
            entry["shape_code"] = [float(v) for v in o.code]
        if include_points and o.points is not None:
            pts = o.points
            if max_points is not None and len(pts) > max_points:
                pts = pts[stratified_indices(len(pts), max_points)]
            entry["points"] = [[float(v) for v in p] for p in pts]
        objects.append(entry)
    return {"objects": objects}


def scene_from_dict(doc, vocab):
    if "objects" not in doc:
        raise GraphError("malformed scene document: missing 'objects'")
    objects = []
    for i, entry in enumerate(doc["objects"]):
        for key in ("id", "category", "box"):
            if key not in entry:
                raise GraphError(f"malformed scene document: missing {key!r} in objects[{i}]")
        code = entry.get("shape_code")
        points = entry.get("points")
        objects.append(SceneObject(
            node_id=int(entry["id"]),
            category_id=vocab.object_id(entry["category"]),
            box=OrientedBox.from_dict(entry["box"]),
            code=np.asarray(code, dtype=np.float64) if code is not None else None,
            points=np.asarray(points, dtype=np.float64) if points is not None else None,
        ))
    return Scene(objects=objects)


def write_scene(scene, vocab, include_points=False):
    return json.dumps(scene_to_dict(scene, vocab, include_points=include_points),
                      indent=2, sort_keys=True).encode("utf-8")


def read_scene(data, vocab):
    if isinstance(data, bytes):
        data = data.decode("utf-8")
    try:
        doc = json.loads(data)
    except json.JSONDecodeError as err:
        raise GraphError(f"malformed scene document: {err}") from err
    return scene_from_dict(doc, vocab)


def stratified_indices(n, k):
    """Deterministic index-stratified downsample of n items to at most k."""
    if n <= k:
        return np.arange(n)
    return np.unique((np.arange(k) * n) // k)
