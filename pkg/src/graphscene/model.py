"""The full scene network: parallel layout/shape graph encoders feeding one
shared variational encoder, twin graph decoders for boxes and shape codes, a
latent manipulation network that touches only edited nodes, and the two
adversarial critics (relationship discriminator on box pairs, auxiliary
classifier discriminator on shape codes).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .autodiff import BatchNormState, ParameterStore, Tensor
from .gcn import GraphFeatures, GraphStructure, gcn_stack, init_gcn_stack, init_linear, mlp2
from .geometry import OrientedBox, transform_cloud
from .scenegraph import apply_change
from .shapecodec import ShapeCodec

EXTENT_CLIP = (1e-3, 1e3)  # safety clamp when materializing boxes


@dataclass
class HyperParams:
    num_categories: int
    num_predicates: int
    feature_width: int = 128
    latent_width: int = 64
    angle_bins: int = 24
    code_width: int = 128
    gcn_layers: int = 5
    disc_hidden: int = 512

    def __post_init__(self):
        if self.feature_width < 4:
            raise ValueError("feature_width must be at least 4")
        if 2 * self.latent_width != self.feature_width:
            # manipulation network consumes latent + noise at feature width
            raise ValueError("latent_width must be feature_width / 2")

    @property
    def obj_embed_width(self):
        return self.feature_width // 2

    @property
    def angle_embed_width(self):
        return max(1, self.feature_width // 8)

    @property
    def box_embed_width(self):
        return self.feature_width - self.obj_embed_width - self.angle_embed_width

    @property
    def code_embed_width(self):
        return self.feature_width - self.obj_embed_width

    @property
    def dec_embed_width(self):
        return self.feature_width - self.latent_width

    @property
    def d_box_input_width(self):
        return 2 * self.num_categories + self.num_predicates + 14

    def to_dict(self):
        return {
            "num_categories": self.num_categories,
            "num_predicates": self.num_predicates,
            "feature_width": self.feature_width,
            "latent_width": self.latent_width,
            "angle_bins": self.angle_bins,
            "code_width": self.code_width,
            "gcn_layers": self.gcn_layers,
            "disc_hidden": self.disc_hidden,
        }

    @staticmethod
    def from_dict(d):
        return HyperParams(**{k: int(v) for k, v in d.items()})


def angle_to_bin(alpha_deg, n_bins=24):
    """Bin k covers [k*step, (k+1)*step) degrees."""
    step = 360.0 / n_bins
    return int(np.floor((float(alpha_deg) % 360.0) / step)) % n_bins


def bin_center(bin_idx, n_bins=24):
    step = 360.0 / n_bins
    return (int(bin_idx) % n_bins) * step + step / 2.0


@dataclass
class LayoutPrediction:
    """Per-node box regression (extents through an exponential map so they
    stay positive, locations linear) plus angle classification logits."""

    box6: Tensor
    angle_logits: Tensor


@dataclass
class SceneObject:
    node_id: int
    category_id: int
    box: OrientedBox
    code: np.ndarray = None
    points: np.ndarray = None


@dataclass
class Scene:
    objects: list = field(default_factory=list)

    def __len__(self):
        return len(self.objects)

    def by_id(self, node_id):
        for o in self.objects:
            if o.node_id == node_id:
                return o
        raise KeyError(f"no scene object with id {node_id}")

    def boxes7(self):
        return np.stack([o.box.as_vector() for o in self.objects])

    def codes(self):
        return np.stack([o.code for o in self.objects])


class ModelParams:
    """All trainable weights, grouped into the generator store (everything in
    the autoencoder path plus the manipulation network) and the discriminator
    store, with batch-norm running buffers alongside."""

    def __init__(self, hp, seed=0):
        self.hp = hp
        self.gen = ParameterStore()
        self.disc = ParameterStore()
        rng = np.random.default_rng(seed)
        F, Z = hp.feature_width, hp.latent_width
        C, P = hp.num_categories, hp.num_predicates
        g = self.gen

        def embed(name, rows, width):
            return g.add(name, rng.normal(0.0, 0.05, size=(rows, width)))

        self.enc_layout_obj = embed("enc_layout.obj_embed", C, hp.obj_embed_width)
        self.enc_layout_angle = embed("enc_layout.angle_embed", hp.angle_bins, hp.angle_embed_width)
        self.enc_layout_box_w, self.enc_layout_box_b = init_linear(
            g, "enc_layout.box_linear", 6, hp.box_embed_width, rng)
        self.enc_layout_pred = embed("enc_layout.pred_embed", P, F)
        self.enc_layout_gcn = init_gcn_stack(g, "enc_layout.gcn", F, rng, hp.gcn_layers)

        self.enc_shape_obj = embed("enc_shape.obj_embed", C, hp.obj_embed_width)
        self.enc_shape_code_w, self.enc_shape_code_b = init_linear(
            g, "enc_shape.code_linear", hp.code_width, hp.code_embed_width, rng)
        self.enc_shape_pred = embed("enc_shape.pred_embed", P, F)
        self.enc_shape_gcn = init_gcn_stack(g, "enc_shape.gcn", F, rng, hp.gcn_layers)

        # the two branch outputs are concatenated and projected back to the
        # common GCN width before the shared encoder
        self.enc_shared_proj_w, self.enc_shared_proj_b = init_linear(
            g, "enc_shared.proj", 2 * F, F, rng)
        self.enc_shared_pred = embed("enc_shared.pred_embed", P, F)
        self.enc_shared_gcn = init_gcn_stack(g, "enc_shared.gcn", F, rng, hp.gcn_layers)
        self.post_w1, self.post_b1 = init_linear(g, "posterior.0", F, F, rng)
        self.post_w2, self.post_b2 = init_linear(g, "posterior.1", F, 2 * Z, rng)

        self.dec_obj = embed("dec.obj_embed", C, hp.dec_embed_width)
        self.dec_layout_pred = embed("dec_layout.pred_embed", P, F)
        self.dec_layout_gcn = init_gcn_stack(g, "dec_layout.gcn", F, rng, hp.gcn_layers)
        self.box_head_w1, self.box_head_b1 = init_linear(g, "dec_layout.box_head.0", F, F, rng)
        self.box_head_w2, self.box_head_b2 = init_linear(g, "dec_layout.box_head.1", F, 6, rng)
        self.angle_head_w1, self.angle_head_b1 = init_linear(g, "dec_layout.angle_head.0", F, F, rng)
        self.angle_head_w2, self.angle_head_b2 = init_linear(
            g, "dec_layout.angle_head.1", F, hp.angle_bins, rng)

        self.dec_shape_pred = embed("dec_shape.pred_embed", P, F)
        self.dec_shape_gcn = init_gcn_stack(g, "dec_shape.gcn", F, rng, hp.gcn_layers)
        self.shape_head_w1, self.shape_head_b1 = init_linear(g, "dec_shape.head.0", F, F, rng)
        self.shape_head_w2, self.shape_head_b2 = init_linear(
            g, "dec_shape.head.1", F, hp.code_width, rng)

        self.manip_pred = embed("manip.pred_embed", P, 2 * Z)
        self.manip_gcn = init_gcn_stack(g, "manip.gcn", 2 * Z, rng, hp.gcn_layers)
        self.manip_head_w, self.manip_head_b = init_linear(g, "manip.head", 2 * Z, Z, rng)

        d = self.disc
        H = hp.disc_hidden
        self.dbox_w1, self.dbox_b1 = init_linear(d, "d_box.l1", hp.d_box_input_width, H, rng)
        self.dbox_g1 = d.add("d_box.bn1.gamma", np.ones((1, H)))
        self.dbox_be1 = d.add("d_box.bn1.beta", np.zeros((1, H)))
        self.dbox_w2, self.dbox_b2 = init_linear(d, "d_box.l2", H, H, rng)
        self.dbox_g2 = d.add("d_box.bn2.gamma", np.ones((1, H)))
        self.dbox_be2 = d.add("d_box.bn2.beta", np.zeros((1, H)))
        self.dbox_w3, self.dbox_b3 = init_linear(d, "d_box.l3", H, 1, rng)

        self.dshape_w1, self.dshape_b1 = init_linear(d, "d_shape.l1", hp.code_width, H, rng)
        self.dshape_g1 = d.add("d_shape.bn1.gamma", np.ones((1, H)))
        self.dshape_be1 = d.add("d_shape.bn1.beta", np.zeros((1, H)))
        self.dshape_w2, self.dshape_b2 = init_linear(d, "d_shape.l2", H, H, rng)
        self.dshape_g2 = d.add("d_shape.bn2.gamma", np.ones((1, H)))
        self.dshape_be2 = d.add("d_shape.bn2.beta", np.zeros((1, H)))
        self.dshape_wd, self.dshape_bd = init_linear(d, "d_shape.headD", H, 1, rng)
        self.dshape_wc, self.dshape_bc = init_linear(d, "d_shape.headC", H, hp.num_categories, rng)

        self.bn_states = {
            "d_box.bn1": BatchNormState(H),
            "d_box.bn2": BatchNormState(H),
            "d_shape.bn1": BatchNormState(H),
            "d_shape.bn2": BatchNormState(H),
        }


def _check_alignment(n_nodes, *arrays):
    for a in arrays:
        if len(a) != n_nodes:
            raise ValueError(f"per-node array of length {len(a)} does not match {n_nodes} nodes")


def encode_scene(params, g, boxes6, angle_bins, codes):
    """Shared posterior over per-node latents.

    Layout branch sees category + box + angle-bin embeddings, shape branch
    category + code embeddings; their outputs are concatenated per node and
    pushed through the shared graph encoder and the posterior head.
    """
    hp = params.hp
    boxes6 = np.asarray(boxes6, dtype=np.float64)
    angle_bins = np.asarray(angle_bins, dtype=np.int64)
    codes = np.asarray(codes, dtype=np.float64)
    _check_alignment(g.num_nodes, boxes6, angle_bins, codes)
    cats = g.categories()
    src, dst, pred = g.edge_arrays()
    structure = GraphStructure(src, dst, g.num_nodes)

    layout_nodes = ad.concat([
        ad.embedding_lookup(params.enc_layout_obj, cats),
        ad.add(ad.matmul(ad.constant(boxes6), params.enc_layout_box_w), params.enc_layout_box_b),
        ad.embedding_lookup(params.enc_layout_angle, angle_bins),
    ], axis=1)
    f_b = gcn_stack(params.enc_layout_gcn, GraphFeatures(
        layout_nodes, ad.embedding_lookup(params.enc_layout_pred, pred), structure)).node_feats

    shape_nodes = ad.concat([
        ad.embedding_lookup(params.enc_shape_obj, cats),
        ad.add(ad.matmul(ad.constant(codes), params.enc_shape_code_w), params.enc_shape_code_b),
    ], axis=1)
    f_s = gcn_stack(params.enc_shape_gcn, GraphFeatures(
        shape_nodes, ad.embedding_lookup(params.enc_shape_pred, pred), structure)).node_feats

    joint = ad.add(ad.matmul(ad.concat([f_b, f_s], axis=1), params.enc_shared_proj_w),
                   params.enc_shared_proj_b)
    f_shared = gcn_stack(params.enc_shared_gcn, GraphFeatures(
        joint, ad.embedding_lookup(params.enc_shared_pred, pred), structure)).node_feats
    head = mlp2(f_shared, params.post_w1, params.post_b1, params.post_w2, params.post_b2)
    Z = hp.latent_width
    mu = ad.slice_cols(head, 0, Z)
    # bounded log-variance keeps the KL term and its gradients finite
    logvar = ad.clip(ad.slice_cols(head, Z, 2 * Z), -10.0, 10.0)
    return mu, logvar


def sample_latent(mu, logvar, eps):
    """Reparameterized posterior sample z = mu + exp(logvar/2) * eps."""
    return ad.gaussian_sample(mu, logvar, eps)


def decode_scene(params, z, g):
    """Decode per-node latents into layout (box + angle logits) and codes."""
    z = ad.as_tensor(z)
    if z.shape != (g.num_nodes, params.hp.latent_width):
        raise ad.ShapeMismatch("decode_scene", z.shape,
                               (g.num_nodes, params.hp.latent_width))
    cats = g.categories()
    src, dst, pred = g.edge_arrays()
    structure = GraphStructure(src, dst, g.num_nodes)
    nodes = ad.concat([ad.embedding_lookup(params.dec_obj, cats), z], axis=1)

    h_b = gcn_stack(params.dec_layout_gcn, GraphFeatures(
        nodes, ad.embedding_lookup(params.dec_layout_pred, pred), structure)).node_feats
    raw = mlp2(h_b, params.box_head_w1, params.box_head_b1,
               params.box_head_w2, params.box_head_b2)
    # extents through a clamped exponential map: positive by construction,
    # immune to overflow when training spikes
    extents = ad.exp(ad.clip(ad.slice_cols(raw, 0, 3), -20.0, 20.0))
    box6 = ad.concat([extents, ad.slice_cols(raw, 3, 6)], axis=1)
    logits = mlp2(h_b, params.angle_head_w1, params.angle_head_b1,
                  params.angle_head_w2, params.angle_head_b2)

    h_s = gcn_stack(params.dec_shape_gcn, GraphFeatures(
        nodes, ad.embedding_lookup(params.dec_shape_pred, pred), structure)).node_feats
    codes = mlp2(h_s, params.shape_head_w1, params.shape_head_b1,
                 params.shape_head_w2, params.shape_head_b2)
    return LayoutPrediction(box6=box6, angle_logits=logits), codes


def manipulate_latent(params, z, g_hat, change, eps_n):
    """Run the manipulation network over the edited graph and splice its
    outputs back in at the changed nodes only.

    Latents of new nodes are zero-padded; every node's latent is concatenated
    with its noise sample where the change mask is set (zeros elsewhere), and
    nodes outside the mask keep their original latent bit-exactly.
    """
    z = ad.as_tensor(z)
    Z = params.hp.latent_width
    n_hat = g_hat.num_nodes
    n_orig = n_hat - len(change.added_nodes)
    if z.shape[0] != n_orig:
        raise ValueError(f"latents cover {z.shape[0]} nodes, expected {n_orig} originals")
    if len(change.change_mask) != n_hat:
        raise ValueError(f"change mask length {len(change.change_mask)} != {n_hat} nodes")
    mask = np.asarray(change.change_mask, dtype=bool)

    if z.shape[0] < n_hat:
        z_pad = ad.concat([z, ad.constant(np.zeros((n_hat - n_orig, Z)))], axis=0)
    else:
        z_pad = z
    if not mask.any():
        return z_pad

    noise = np.asarray(eps_n, dtype=np.float64)
    if noise.shape != (n_hat, Z):
        raise ValueError(f"noise shape {noise.shape} != {(n_hat, Z)}")
    noise = noise * mask[:, None]

    src, dst, pred = g_hat.edge_arrays()
    structure = GraphStructure(src, dst, n_hat)
    t_in = ad.concat([z_pad, ad.constant(noise)], axis=1)
    t_out = gcn_stack(params.manip_gcn, GraphFeatures(
        t_in, ad.embedding_lookup(params.manip_pred, pred), structure)).node_feats
    proj = ad.add(ad.matmul(t_out, params.manip_head_w), params.manip_head_b)
    return ad.where_rows(mask, proj, z_pad)


def _one_hot(indices, depth):
    out = np.zeros((len(indices), depth))
    out[np.arange(len(indices)), np.asarray(indices, dtype=np.int64)] = 1.0
    return out


def d_box_logits(params, cat_i, cat_j, pred, box_i, box_j, train=False):
    """Relationship discriminator trunk; returns pre-sigmoid logits."""
    hp = params.hp
    oh = ad.constant(np.concatenate([
        _one_hot(cat_i, hp.num_categories),
        _one_hot(cat_j, hp.num_categories),
        _one_hot(pred, hp.num_predicates),
    ], axis=1))
    box_i, box_j = ad.as_tensor(box_i), ad.as_tensor(box_j)
    if box_i.shape[1] != 7 or box_j.shape[1] != 7:
        raise ad.ShapeMismatch("d_box_forward", box_i.shape, box_j.shape)
    x = ad.concat([oh, box_i, box_j], axis=1)
    if x.shape[1] != hp.d_box_input_width:
        raise ad.ShapeMismatch("d_box_forward", x.shape, (None, hp.d_box_input_width))
    h = ad.leaky_relu(ad.batch_norm(ad.add(ad.matmul(x, params.dbox_w1), params.dbox_b1),
                                    params.dbox_g1, params.dbox_be1,
                                    params.bn_states["d_box.bn1"], train))
    h = ad.leaky_relu(ad.batch_norm(ad.add(ad.matmul(h, params.dbox_w2), params.dbox_b2),
                                    params.dbox_g2, params.dbox_be2,
                                    params.bn_states["d_box.bn2"], train))
    return ad.add(ad.matmul(h, params.dbox_w3), params.dbox_b3)


def d_box_forward(params, cat_i, cat_j, pred, box_i, box_j, train=False):
    """Probability that a (category, category, predicate, box, box) tuple is
    a real composition."""
    return ad.sigmoid(d_box_logits(params, cat_i, cat_j, pred, box_i, box_j, train))


def d_shape_logits(params, codes, train=False):
    """Shape discriminator trunk; returns (real/fake logits, class logits)."""
    codes = ad.as_tensor(codes)
    if codes.shape[1] != params.hp.code_width:
        raise ad.ShapeMismatch("d_shape_forward", codes.shape, (None, params.hp.code_width))
    h = ad.leaky_relu(ad.batch_norm(ad.add(ad.matmul(codes, params.dshape_w1), params.dshape_b1),
                                    params.dshape_g1, params.dshape_be1,
                                    params.bn_states["d_shape.bn1"], train))
    h = ad.leaky_relu(ad.batch_norm(ad.add(ad.matmul(h, params.dshape_w2), params.dshape_b2),
                                    params.dshape_g2, params.dshape_be2,
                                    params.bn_states["d_shape.bn2"], train))
    d = ad.add(ad.matmul(h, params.dshape_wd), params.dshape_bd)
    c = ad.add(ad.matmul(h, params.dshape_wc), params.dshape_bc)
    return d, c


def d_shape_forward(params, codes, train=False):
    """(real/fake probability, per-category distribution) for shape codes."""
    d, c = d_shape_logits(params, codes, train)
    return ad.sigmoid(d), ad.softmax(c, axis=1)


def expected_angle_fraction(angle_logits, n_bins):
    """Differentiable angle summary for the discriminator: softmax-weighted
    bin center, expressed as a fraction of the full turn."""
    centers = np.array([[bin_center(k, n_bins) / 360.0] for k in range(n_bins)])
    return ad.matmul(ad.softmax(angle_logits, axis=1), ad.constant(centers))


def prediction_to_boxes(pred, n_bins):
    """Materialize OrientedBox values from a layout prediction (argmax bin)."""
    box6 = pred.box6.values
    bins = np.argmax(pred.angle_logits.values, axis=1)
    boxes = []
    for row, b in zip(box6, bins):
        w, l, h = np.clip(row[:3], *EXTENT_CLIP)
        boxes.append(OrientedBox(w=w, l=l, h=h, cx=row[3], cy=row[4], cz=row[5],
                                 alpha=bin_center(int(b), n_bins)))
    return boxes


def scene_to_arrays(scene, hp):
    """(box6, angle bin, code) training arrays from a scene."""
    boxes7 = scene.boxes7()
    box6 = boxes7[:, :6]
    bins = np.array([angle_to_bin(a, hp.angle_bins) for a in boxes7[:, 6]], dtype=np.int64)
    return box6, bins, scene.codes()


def _materialize_object(node, box, code, codec, n_points):
    projected = codec.nearest(code)
    prims = codec.unpack(projected)
    cloud = transform_cloud(codec.decode(projected, n_points), box, prims.half_extents)
    return SceneObject(node_id=node.id, category_id=node.category_id,
                       box=box, code=projected, points=cloud)


def generate(params, g, rng, codec=None, n_points=256):
    """Sample a scene for a graph: prior latents per node, decode, project
    codes onto the codec manifold and decode their clouds."""
    hp = params.hp
    codec = codec or ShapeCodec(hp.num_categories, hp.code_width)
    rng = np.random.default_rng(rng) if not isinstance(rng, np.random.Generator) else rng
    z = rng.standard_normal((g.num_nodes, hp.latent_width))
    pred, codes = decode_scene(params, ad.constant(z), g)
    boxes = prediction_to_boxes(pred, hp.angle_bins)
    objects = [
        _materialize_object(node, box, code, codec, n_points)
        for node, box, code in zip(g.nodes, boxes, codes.values)
    ]
    return Scene(objects=objects)


def _changed_edge_rows(g, g_hat, change):
    """Edge indices of g_hat that carry the user's change: relabeled
    originals plus every added edge."""
    rows = [idx for idx, _pred in change.relabeled_edges]
    rows.extend(range(g.num_edges, g_hat.num_edges))
    return rows


def _score_candidate(params, g_hat, edge_rows, boxes):
    """Mean critic log-odds that the changed compositions are real."""
    cats = g_hat.categories()
    src, dst, pred = g_hat.edge_arrays()

    def b7(box):
        return np.concatenate([
            [box.w, box.l, box.h, box.cx, box.cy, box.cz],
            [bin_center(angle_to_bin(box.alpha, params.hp.angle_bins),
                        params.hp.angle_bins) / 360.0],
        ])

    rows = np.asarray(edge_rows, dtype=np.int64)
    bi = np.stack([b7(boxes[i]) for i in src[rows]])
    bj = np.stack([b7(boxes[j]) for j in dst[rows]])
    logits = d_box_logits(params, cats[src[rows]], cats[dst[rows]], pred[rows],
                          bi, bj, train=False)
    return float(logits.values.mean())


def manipulate_scene(params, g, scene, change, rng, codec=None, n_points=256,
                     candidates=16):
    """Apply a graph change to an existing scene.

    Existing nodes are encoded at the posterior mean; the manipulation
    network re-generates only the masked nodes, everything else keeps its
    original box, code and points verbatim. Several noise candidates are
    decoded and the relationship critic picks the most plausible composition
    for the changed edges (candidates=1 recovers the single-pass behavior).
    Returns (scene, changed ids).
    """
    hp = params.hp
    codec = codec or ShapeCodec(hp.num_categories, hp.code_width)
    rng = np.random.default_rng(rng) if not isinstance(rng, np.random.Generator) else rng
    if len(scene) != g.num_nodes:
        raise ValueError(f"scene has {len(scene)} objects for {g.num_nodes} nodes")

    box6, bins, codes_np = scene_to_arrays(scene, hp)
    mu, _logvar = encode_scene(params, g, box6, bins, codes_np)
    mu = mu.detach()
    g_hat = apply_change(g, change)
    mask = list(change.change_mask)
    edge_rows = _changed_edge_rows(g, g_hat, change)
    n_rounds = max(1, int(candidates)) if (any(mask) and edge_rows) else 1

    best = None
    for _ in range(n_rounds):
        eps_n = rng.standard_normal((g_hat.num_nodes, hp.latent_width))
        z_final = manipulate_latent(params, mu, g_hat, change, eps_n)
        pred, codes = decode_scene(params, z_final, g_hat)
        boxes = prediction_to_boxes(pred, hp.angle_bins)
        score = (_score_candidate(params, g_hat, edge_rows, boxes)
                 if n_rounds > 1 else 0.0)
        if best is None or score > best[0]:
            best = (score, boxes, codes.values)

    _score, boxes, code_values = best
    objects = []
    changed_ids = []
    for i, node in enumerate(g_hat.nodes):
        if mask[i]:
            objects.append(_materialize_object(node, boxes[i], code_values[i], codec, n_points))
            changed_ids.append(node.id)
        else:
            objects.append(scene.objects[i])
    return Scene(objects=objects), changed_ids
