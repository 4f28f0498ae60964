"""Scene-graph data model: nodes with object categories, directed edges with
predicate labels, user-change records, validation and JSON serialization.

Graphs are immutable values; every edit produces a new graph.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace

import numpy as np


class GraphError(ValueError):
    pass


@dataclass(frozen=True)
class ObjectNode:
    id: int
    category_id: int


@dataclass(frozen=True)
class EdgeTriplet:
    src: int
    dst: int
    predicate_id: int


@dataclass(frozen=True)
class Vocabulary:
    object_names: tuple
    predicate_names: tuple
    name: str = "default"

    def __post_init__(self):
        object.__setattr__(self, "object_names", tuple(self.object_names))
        object.__setattr__(self, "predicate_names", tuple(self.predicate_names))
        if len(set(self.object_names)) != len(self.object_names):
            raise GraphError("duplicate object names in vocabulary")
        if len(set(self.predicate_names)) != len(self.predicate_names):
            raise GraphError("duplicate predicate names in vocabulary")

    @property
    def num_objects(self):
        return len(self.object_names)

    @property
    def num_predicates(self):
        return len(self.predicate_names)

    def object_id(self, name):
        try:
            return self.object_names.index(name)
        except ValueError:
            raise GraphError(f"unknown object category {name!r}") from None

    def predicate_id(self, name):
        try:
            return self.predicate_names.index(name)
        except ValueError:
            raise GraphError(f"unknown predicate {name!r}") from None

    def to_dict(self):
        return {"objects": list(self.object_names), "predicates": list(self.predicate_names)}

    @staticmethod
    def from_dict(d, name="default"):
        if "objects" not in d or "predicates" not in d:
            raise GraphError("vocabulary document needs 'objects' and 'predicates' keys")
        return Vocabulary(tuple(d["objects"]), tuple(d["predicates"]), name=name)


@dataclass(frozen=True)
class SceneGraph:
    nodes: tuple
    edges: tuple
    vocab_ref: str = "default"

    def __post_init__(self):
        object.__setattr__(self, "nodes", tuple(self.nodes))
        object.__setattr__(self, "edges", tuple(self.edges))

    @property
    def num_nodes(self):
        return len(self.nodes)

    @property
    def num_edges(self):
        return len(self.edges)

    def node_ids(self):
        return [n.id for n in self.nodes]

    def index_of(self, node_id):
        """Position of a node id in the node list."""
        for i, n in enumerate(self.nodes):
            if n.id == node_id:
                return i
        raise GraphError(f"node id {node_id} not in graph")

    def categories(self):
        return np.array([n.category_id for n in self.nodes], dtype=np.int64)

    def edge_arrays(self):
        """(src_index, dst_index, predicate_id) arrays, indices into nodes."""
        pos = {n.id: i for i, n in enumerate(self.nodes)}
        src = np.array([pos[e.src] for e in self.edges], dtype=np.int64)
        dst = np.array([pos[e.dst] for e in self.edges], dtype=np.int64)
        pred = np.array([e.predicate_id for e in self.edges], dtype=np.int64)
        return src, dst, pred


@dataclass(frozen=True)
class GraphChange:
    """A user edit: added nodes/edges and relabeled edges, plus the per-node
    mask of everything that participated in the change (over the nodes of the
    edited graph, original order then added order)."""

    added_nodes: tuple = ()
    added_edges: tuple = ()
    relabeled_edges: tuple = ()  # (edge index, new predicate_id) pairs
    change_mask: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "added_nodes", tuple(self.added_nodes))
        object.__setattr__(self, "added_edges", tuple(self.added_edges))
        object.__setattr__(self, "relabeled_edges", tuple(tuple(p) for p in self.relabeled_edges))
        object.__setattr__(self, "change_mask", tuple(bool(b) for b in self.change_mask))

    @property
    def is_empty(self):
        return not (self.added_nodes or self.added_edges or self.relabeled_edges)


def make_change(g, added_nodes=(), added_edges=(), relabeled_edges=()):
    """Build a GraphChange against graph g with the change mask derived from
    the invariant: added nodes and every endpoint of an added or relabeled
    edge are marked, nothing else."""
    added_nodes = tuple(added_nodes)
    added_edges = tuple(added_edges)
    relabeled_edges = tuple(tuple(p) for p in relabeled_edges)
    ids = [n.id for n in g.nodes] + [n.id for n in added_nodes]
    pos = {nid: i for i, nid in enumerate(ids)}
    mask = [False] * len(ids)
    for i in range(g.num_nodes, len(ids)):
        mask[i] = True
    for e in added_edges:
        for endpoint in (e.src, e.dst):
            if endpoint not in pos:
                raise GraphError(f"added edge references unknown node id {endpoint}")
            mask[pos[endpoint]] = True
    for idx, _new_pred in relabeled_edges:
        if not (0 <= idx < g.num_edges):
            raise GraphError(f"relabeled edge index {idx} out of range")
        edge = g.edges[idx]
        mask[pos[edge.src]] = True
        mask[pos[edge.dst]] = True
    return GraphChange(added_nodes, added_edges, relabeled_edges, tuple(mask))


@dataclass(frozen=True)
class Violation:
    kind: str
    where: str
    message: str

    def __str__(self):
        return f"{self.kind} at {self.where}: {self.message}"

    def to_dict(self):
        return {"kind": self.kind, "where": self.where, "message": self.message}


def validate_graph(g, vocab):
    """Check every graph invariant; returns a list of violations, empty iff
    the graph is valid for the given vocabulary."""
    report = []
    if g.num_nodes < 1:
        report.append(Violation("empty-graph", "nodes", "a graph needs at least one node"))
    seen = {}
    for i, n in enumerate(g.nodes):
        if n.id in seen:
            report.append(Violation("duplicate-id", f"node {i}",
                                    f"id {n.id} already used by node {seen[n.id]}"))
        else:
            seen[n.id] = i
        if not (0 <= n.category_id < vocab.num_objects):
            report.append(Violation("category out of range", f"node {i}",
                                    f"category_id {n.category_id} not in [0, {vocab.num_objects})"))
    for i, e in enumerate(g.edges):
        if e.src == e.dst:
            report.append(Violation("self-loop", f"edge {i}", f"src == dst == {e.src}"))
        for endpoint in (e.src, e.dst):
            if endpoint not in seen:
                report.append(Violation("dangling-endpoint", f"edge {i}",
                                        f"node id {endpoint} does not exist"))
        if not (0 <= e.predicate_id < vocab.num_predicates):
            report.append(Violation("predicate out of range", f"edge {i}",
                                    f"predicate_id {e.predicate_id} not in [0, {vocab.num_predicates})"))
    return report


def apply_change(g, change):
    """Apply a GraphChange: original nodes plus added nodes, original edges
    with relabels applied plus added edges. Original node ids are preserved."""
    ids = {n.id for n in g.nodes}
    for n in change.added_nodes:
        if n.id in ids:
            raise GraphError(f"added node id {n.id} collides with an existing node")
        ids.add(n.id)
    for e in change.added_edges:
        for endpoint in (e.src, e.dst):
            if endpoint not in ids:
                raise GraphError(f"added edge references unknown node id {endpoint}")
    edges = list(g.edges)
    for idx, new_pred in change.relabeled_edges:
        if not (0 <= idx < len(g.edges)):
            raise GraphError(f"relabeled edge index {idx} out of range")
        edges[idx] = replace(edges[idx], predicate_id=int(new_pred))
    expected_len = g.num_nodes + len(change.added_nodes)
    if len(change.change_mask) != expected_len:
        raise GraphError(
            f"change mask length {len(change.change_mask)} does not match {expected_len} nodes")
    return SceneGraph(nodes=g.nodes + change.added_nodes,
                      edges=tuple(edges) + change.added_edges,
                      vocab_ref=g.vocab_ref)


def simulate_manipulation(g, mode, vocab, rng):
    """Produce a randomly edited copy of g for training or demos.

    mode 'none' returns the graph untouched with an empty change; 'relabel'
    corrupts one uniformly chosen edge label; 'add' inserts a random-category
    node with 1-3 edges to existing nodes. Deterministic given the rng seed.
    """
    rng = np.random.default_rng(rng) if not isinstance(rng, np.random.Generator) else rng
    if mode == "none":
        return g, make_change(g)
    if mode == "relabel":
        if g.num_edges < 1:
            raise GraphError("relabel mode needs at least one edge")
        idx = int(rng.integers(g.num_edges))
        old = g.edges[idx].predicate_id
        offset = int(rng.integers(vocab.num_predicates - 1))
        new_pred = (old + 1 + offset) % vocab.num_predicates
        change = make_change(g, relabeled_edges=[(idx, new_pred)])
        return apply_change(g, change), change
    if mode == "add":
        if vocab.num_objects < 1 or vocab.num_predicates < 1:
            raise GraphError("add mode needs a nonempty vocabulary")
        new_id = max(n.id for n in g.nodes) + 1
        node = ObjectNode(id=new_id, category_id=int(rng.integers(vocab.num_objects)))
        n_edges = min(int(rng.integers(1, 4)), g.num_nodes)
        partners = rng.choice(g.num_nodes, size=n_edges, replace=False)
        edges = []
        for p in partners:
            other = g.nodes[int(p)].id
            pred = int(rng.integers(vocab.num_predicates))
            if rng.integers(2) == 0:
                edges.append(EdgeTriplet(src=new_id, dst=other, predicate_id=pred))
            else:
                edges.append(EdgeTriplet(src=other, dst=new_id, predicate_id=pred))
        change = make_change(g, added_nodes=[node], added_edges=edges)
        return apply_change(g, change), change
    raise GraphError(f"unknown manipulation mode {mode!r}")


def _require(doc, key, where):
    if key not in doc:
        raise GraphError(f"malformed graph document: missing {key!r} in {where}")
    return doc[key]


def graph_to_dict(g, vocab):
    return {
        "vocab": g.vocab_ref,
        "objects": [{"id": n.id, "category": vocab.object_names[n.category_id]}
                    for n in g.nodes],
        "edges": [{"src": e.src, "dst": e.dst, "predicate": vocab.predicate_names[e.predicate_id]}
                  for e in g.edges],
    }


def graph_from_dict(doc, vocab):
    objects = _require(doc, "objects", "document root")
    edge_docs = _require(doc, "edges", "document root")
    nodes = []
    for i, od in enumerate(objects):
        nodes.append(ObjectNode(id=int(_require(od, "id", f"objects[{i}]")),
                                category_id=vocab.object_id(_require(od, "category", f"objects[{i}]"))))
    edges = []
    for i, ed in enumerate(edge_docs):
        edges.append(EdgeTriplet(src=int(_require(ed, "src", f"edges[{i}]")),
                                 dst=int(_require(ed, "dst", f"edges[{i}]")),
                                 predicate_id=vocab.predicate_id(_require(ed, "predicate", f"edges[{i}]"))))
    return SceneGraph(nodes=tuple(nodes), edges=tuple(edges),
                      vocab_ref=doc.get("vocab", vocab.name))


def write_graph(g, vocab):
    return json.dumps(graph_to_dict(g, vocab), indent=2, sort_keys=True).encode("utf-8")


def read_graph(data, vocab):
    if isinstance(data, bytes):
        data = data.decode("utf-8")
    try:
        doc = json.loads(data)
    except json.JSONDecodeError as err:
        raise GraphError(f"malformed graph document: {err}") from err
    return graph_from_dict(doc, vocab)


def change_to_dict(change, g, vocab):
    return {
        "added_nodes": [{"id": n.id, "category": vocab.object_names[n.category_id]}
                        for n in change.added_nodes],
        "added_edges": [{"src": e.src, "dst": e.dst,
                         "predicate": vocab.predicate_names[e.predicate_id]}
                        for e in change.added_edges],
        "relabeled_edges": [{"edge": idx, "predicate": vocab.predicate_names[pred]}
                            for idx, pred in change.relabeled_edges],
    }


def change_from_dict(doc, g, vocab):
    nodes = [ObjectNode(id=int(_require(d, "id", "added_nodes")),
                        category_id=vocab.object_id(_require(d, "category", "added_nodes")))
             for d in doc.get("added_nodes", [])]
    edges = [EdgeTriplet(src=int(_require(d, "src", "added_edges")),
                         dst=int(_require(d, "dst", "added_edges")),
                         predicate_id=vocab.predicate_id(_require(d, "predicate", "added_edges")))
             for d in doc.get("added_edges", [])]
    relabels = [(int(_require(d, "edge", "relabeled_edges")),
                 vocab.predicate_id(_require(d, "predicate", "relabeled_edges")))
                for d in doc.get("relabeled_edges", [])]
    return make_change(g, added_nodes=nodes, added_edges=edges, relabeled_edges=relabels)
