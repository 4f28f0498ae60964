"""Training objectives and the training loop.

Each step simulates a user manipulation per scene, encodes the original
scenes, splices manipulated latents, decodes the edited graphs, and applies
the reconstruction + KL objective on unchanged nodes plus adversarial
objectives on changed edges and nodes. Generator and discriminator take one
alternating Adam step each. Scenes in a batch are merged into one
block-diagonal graph so every network pass is a single set of matrix ops.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .gcn import GraphFeatures, GraphStructure, gcn_stack
from .model import (
    bin_center,
    d_box_logits,
    d_shape_logits,
    decode_scene,
    encode_scene,
    sample_latent,
)
from .scenegraph import ObjectNode, SceneGraph, simulate_manipulation


class TrainingDiverged(RuntimeError):
    def __init__(self, epoch, batch):
        super().__init__(f"non-finite loss at epoch {epoch}, batch {batch}")
        self.epoch = epoch
        self.batch = batch


@dataclass
class TrainConfig:
    lr: float = 0.001
    batch_size: int = 8
    epochs: int = 100
    seed: int = 0
    kl_weight: float = 0.1
    box_gan_weight: float = 0.1
    shape_gan_weight: float = 0.1
    grad_clip: float = 15.0  # global gradient-norm ceiling (spike guard), 0 disables
    disc_interval: int = 2   # discriminator step every N batches (generator: every batch)
    # probabilities of (none, relabel, add) during manipulation simulation
    manipulation_mix: tuple = (0.4, 0.35, 0.25)

    def __post_init__(self):
        if self.lr <= 0 or self.batch_size < 1 or self.epochs < 0:
            raise ValueError("lr, batch_size and epochs must be positive")
        if abs(sum(self.manipulation_mix) - 1.0) > 1e-9:
            raise ValueError("manipulation mix must sum to 1")

    def to_dict(self):
        return {
            "lr": self.lr, "batch_size": self.batch_size, "epochs": self.epochs,
            "seed": self.seed, "kl_weight": self.kl_weight,
            "box_gan_weight": self.box_gan_weight,
            "shape_gan_weight": self.shape_gan_weight,
            "grad_clip": self.grad_clip,
            "disc_interval": self.disc_interval,
            "manipulation_mix": list(self.manipulation_mix),
        }


@dataclass
class LossBreakdown:
    recon_box: float = 0.0
    recon_angle: float = 0.0
    recon_shape: float = 0.0
    kl: float = 0.0
    d_box_g: float = 0.0
    d_box_d: float = 0.0
    d_shape_g: float = 0.0
    d_shape_d: float = 0.0
    aux: float = 0.0
    total: float = 0.0

    def to_dict(self, epoch=None):
        d = {} if epoch is None else {"epoch": epoch}
        d.update({
            "recon_box": self.recon_box, "recon_angle": self.recon_angle,
            "recon_shape": self.recon_shape, "kl": self.kl,
            "d_box_g": self.d_box_g, "d_box_d": self.d_box_d,
            "d_shape_g": self.d_shape_g, "d_shape_d": self.d_shape_d,
            "aux": self.aux, "total": self.total,
        })
        return d


def loss_reconstruction(pred, pred_codes, target_box6, target_bins, target_codes, rows):
    """L1 on box parameters, cross-entropy on the angle bin and L1 on shape
    codes, averaged over the given (unchanged) rows. Empty selection
    contributes exactly zero."""
    rows = np.asarray(rows, dtype=np.int64)
    if rows.size == 0:
        zero = ad.constant(np.zeros(()))
        return zero, zero, zero
    box = ad.l1_loss(ad.embedding_lookup(pred.box6, rows), ad.constant(target_box6))
    angle = ad.cross_entropy(ad.embedding_lookup(pred.angle_logits, rows), target_bins)
    shape = ad.l1_loss(ad.embedding_lookup(pred_codes, rows), ad.constant(target_codes))
    return box, angle, shape


def loss_kl(mu, logvar):
    """Closed-form KL divergence of the diagonal posterior from N(0, I),
    summed over latent dimensions and averaged over nodes."""
    n = mu.shape[0]
    inner = ad.add(ad.mul(mu, mu), ad.add_const(ad.sub(ad.exp(logvar), logvar), -1.0))
    return ad.scale(ad.sum_all(inner), 0.5 / n)


def loss_adversarial_box(params, real, fake, train_bn=False, mismatch=None):
    """Non-saturating GAN losses over changed relationship tuples.

    real and fake are each (cat_i, cat_j, pred, box7_i, box7_j); the fake
    boxes carry generator gradients. Returns (generator loss, discriminator
    loss), both summed over the tuples. Real and fake tuples share every
    discriminator pass so batch-norm statistics cannot separate the sides.

    mismatch, when given, holds real boxes paired with a predicate that is
    geometrically false for them; they join the negatives so the critic can
    only win through label-geometry coupling, never box marginals alone.
    """
    r_ci, r_cj, r_pr, r_bi, r_bj = real
    f_ci, f_cj, f_pr, f_bi, f_bj = fake
    if mismatch is None:
        mismatch = (np.zeros(0, dtype=np.int64), np.zeros(0, dtype=np.int64),
                    np.zeros(0, dtype=np.int64), np.zeros((0, 7)), np.zeros((0, 7)))
    m_ci, m_cj, m_pr, m_bi, m_bj = mismatch
    n_real, n_mis = len(r_ci), len(m_ci)
    cats_i = np.concatenate([r_ci, m_ci, f_ci])
    cats_j = np.concatenate([r_cj, m_cj, f_cj])
    preds = np.concatenate([r_pr, m_pr, f_pr])
    f_bi, f_bj = ad.as_tensor(f_bi), ad.as_tensor(f_bj)
    const_bi = np.concatenate([r_bi, m_bi], axis=0)
    const_bj = np.concatenate([r_bj, m_bj], axis=0)

    def joint_pass(fake_bi, fake_bj):
        bi = ad.concat([ad.constant(const_bi), fake_bi], axis=0)
        bj = ad.concat([ad.constant(const_bj), fake_bj], axis=0)
        logits = d_box_logits(params, cats_i, cats_j, preds, bi, bj, train=train_bn)
        return (ad.slice2d(logits, rows=slice(0, n_real)),
                ad.slice2d(logits, rows=slice(n_real, n_real + n_mis)),
                ad.slice2d(logits, rows=slice(n_real + n_mis, None)))

    _, _, fake_live = joint_pass(f_bi, f_bj)
    g_loss = ad.sum_all(ad.softplus(ad.scale(fake_live, -1.0)))
    real_logits, mis_logits, fake_det = joint_pass(f_bi.detach(), f_bj.detach())
    d_loss = ad.add(ad.sum_all(ad.softplus(ad.scale(real_logits, -1.0))),
                    ad.sum_all(ad.softplus(fake_det)))
    if n_mis:
        d_loss = ad.add(d_loss, ad.sum_all(ad.softplus(mis_logits)))
    return g_loss, d_loss


def loss_adversarial_shape(params, real_codes, real_cats, fake_codes, fake_cats,
                           train_bn=False):
    """GAN losses over changed shape codes with the auxiliary classification
    term applied to both real and fake codes on both sides. As with the box
    critic, real and fake codes share each discriminator pass."""
    fake_codes = ad.as_tensor(fake_codes)
    n_real = len(real_cats)

    def joint_pass(fake_side):
        codes = ad.concat([ad.constant(real_codes), fake_side], axis=0)
        d, c = d_shape_logits(params, codes, train=train_bn)
        return (ad.slice2d(d, rows=slice(0, n_real)),
                ad.slice2d(d, rows=slice(n_real, None)),
                ad.slice2d(c, rows=slice(0, n_real)),
                ad.slice2d(c, rows=slice(n_real, None)))

    _, fake_d_live, _, fake_c_live = joint_pass(fake_codes)
    aux_fake = ad.cross_entropy(fake_c_live, fake_cats)
    g_loss = ad.add(ad.sum_all(ad.softplus(ad.scale(fake_d_live, -1.0))), aux_fake)

    real_d, det_d, real_c, det_c = joint_pass(fake_codes.detach())
    aux_real = ad.cross_entropy(real_c, real_cats)
    aux_det = ad.cross_entropy(det_c, fake_cats)
    d_loss = ad.add(ad.add(ad.sum_all(ad.softplus(ad.scale(real_d, -1.0))),
                           ad.sum_all(ad.softplus(det_d))),
                    ad.add(aux_real, aux_det))
    return g_loss, d_loss, aux_real


def _merge_graphs(graphs):
    """Disjoint union with nodes renumbered 0..N-1; returns the merged graph
    and per-graph node offsets."""
    nodes, edges, offsets = [], [], []
    offset = 0
    for g in graphs:
        offsets.append(offset)
        pos = {n.id: offset + i for i, n in enumerate(g.nodes)}
        nodes.extend(ObjectNode(id=pos[n.id], category_id=n.category_id) for n in g.nodes)
        for e in g.edges:
            edges.append(type(e)(src=pos[e.src], dst=pos[e.dst], predicate_id=e.predicate_id))
        offset += g.num_nodes
    return SceneGraph(nodes=tuple(nodes), edges=tuple(edges)), offsets


@dataclass
class PreparedBatch:
    """Everything random about one training step, drawn up front so the loss
    is a deterministic function of the parameters."""

    merged_orig: SceneGraph
    merged_hat: SceneGraph
    box6: np.ndarray          # encoder inputs over original nodes
    bins: np.ndarray
    codes: np.ndarray
    eps: np.ndarray           # posterior noise, one row per original node
    z_gather: np.ndarray      # hat row -> original merged row (0 for added)
    orig_col: np.ndarray      # (n_hat, 1) 1.0 where the hat row is original
    mask: np.ndarray          # change mask over hat rows
    t_noise: np.ndarray       # manipulation noise over hat rows
    recon_rows: np.ndarray    # unmasked hat rows
    recon_box6: np.ndarray
    recon_bins: np.ndarray
    recon_codes: np.ndarray
    changed_src: np.ndarray   # endpoints of changed edges, hat rows
    changed_dst: np.ndarray
    changed_pred: np.ndarray
    hat_cats: np.ndarray
    hat_gt_box7: np.ndarray = None  # ground-truth boxes over hat rows (0 for added)
    mismatch_edges: tuple = None    # real boxes with geometrically false labels
    real_edges: tuple = None  # (cat_i, cat_j, pred, box7_i, box7_j) arrays
    real_codes: np.ndarray = None
    real_cats: np.ndarray = None
    modes: list = field(default_factory=list)


def prepare_batch(samples, cfg, vocab, rng, angle_bins=24):
    """Simulate one manipulation per scene and draw every random quantity of
    the step. samples is a list of (SceneGraph, Scene) pairs."""
    modes = ["none", "relabel", "add"]
    graphs, scenes, hats, changes = [], [], [], []
    for g, scene in samples:
        mode = modes[int(rng.choice(3, p=cfg.manipulation_mix))]
        if mode == "relabel" and g.num_edges == 0:
            mode = "none"
        g_hat, change = simulate_manipulation(g, mode, vocab, rng)
        graphs.append(g)
        scenes.append(scene)
        hats.append(g_hat)
        changes.append((mode, change))

    merged_orig, orig_offsets = _merge_graphs(graphs)
    merged_hat, hat_offsets = _merge_graphs(hats)

    # edges that contain a change: relabeled originals plus added edges
    changed_edge_rows = []
    edge_offset = 0
    for g, g_hat, (_mode, change) in zip(graphs, hats, changes):
        changed_edge_rows.extend(edge_offset + idx for idx, _p in change.relabeled_edges)
        changed_edge_rows.extend(range(edge_offset + g.num_edges, edge_offset + g_hat.num_edges))
        edge_offset += g_hat.num_edges

    box6_list, bins_list, codes_list = [], [], []
    z_gather, orig_col, mask, hat_gt_box7 = [], [], [], []
    recon_rows, recon_box6, recon_bins, recon_codes = [], [], [], []
    for s, (g, scene, g_hat, (mode, change)) in enumerate(zip(graphs, scenes, hats, changes)):
        b6, bn, cd = scene_arrays_cached(scene, angle_bins)
        boxes7 = scene.boxes7()
        box6_list.append(b6)
        bins_list.append(bn)
        codes_list.append(cd)
        n, n_hat = g.num_nodes, g_hat.num_nodes
        for i in range(n_hat):
            hat_row = hat_offsets[s] + i
            original = i < n
            z_gather.append(orig_offsets[s] + i if original else 0)
            orig_col.append(1.0 if original else 0.0)
            mask.append(change.change_mask[i])
            if original:
                # angle quantized to its bin center so real and fake tuples
                # share one angle representation in the discriminator
                frac = bin_center(bn[i], angle_bins) / 360.0
                hat_gt_box7.append(np.concatenate([b6[i], [frac]]))
            else:
                hat_gt_box7.append(np.zeros(7))
            if original and not change.change_mask[i]:
                recon_rows.append(hat_row)
                recon_box6.append(b6[i])
                recon_bins.append(bn[i])
                recon_codes.append(cd[i])

    box6 = np.concatenate(box6_list, axis=0)
    bins = np.concatenate(bins_list, axis=0)
    codes = np.concatenate(codes_list, axis=0)
    mask = np.array(mask, dtype=bool)

    src, dst, pred = merged_hat.edge_arrays()
    changed = np.array(changed_edge_rows, dtype=np.int64)
    changed_src, changed_dst, changed_pred = src[changed], dst[changed], pred[changed]
    hat_cats = merged_hat.categories()

    batch = PreparedBatch(
        merged_orig=merged_orig,
        merged_hat=merged_hat,
        box6=box6, bins=bins, codes=codes,
        eps=None, z_gather=np.array(z_gather, dtype=np.int64),
        orig_col=np.array(orig_col)[:, None],
        mask=mask, t_noise=None,
        recon_rows=np.array(recon_rows, dtype=np.int64),
        recon_box6=np.array(recon_box6) if recon_box6 else np.zeros((0, 6)),
        recon_bins=np.array(recon_bins, dtype=np.int64),
        recon_codes=np.array(recon_codes) if recon_codes else np.zeros((0, codes.shape[1])),
        changed_src=changed_src, changed_dst=changed_dst, changed_pred=changed_pred,
        hat_cats=hat_cats,
        hat_gt_box7=np.array(hat_gt_box7),
        modes=[m for m, _ in changes],
    )

    # ground-truth pools for the discriminators
    gt_ci, gt_cj, gt_pred, gt_bi, gt_bj, gt_false = [], [], [], [], [], []
    gt_codes, gt_cats = [], []
    step = 360.0 / angle_bins
    for g, scene in zip(graphs, scenes):
        cats = g.categories()
        boxes7 = scene.boxes7()
        boxes7n = boxes7.copy()
        bins_here = np.floor((boxes7[:, 6] % 360.0) / step).astype(np.int64) % angle_bins
        boxes7n[:, 6] = (bins_here * step + step / 2.0) / 360.0
        s_arr, d_arr, p_arr = g.edge_arrays()
        false_here = false_labels_cached(g, scene, vocab)
        for a, b, p, fl in zip(s_arr, d_arr, p_arr, false_here):
            gt_ci.append(cats[a]); gt_cj.append(cats[b]); gt_pred.append(p)
            gt_bi.append(boxes7n[a]); gt_bj.append(boxes7n[b])
            gt_false.append(fl)
        gt_codes.append(scene.codes())
        gt_cats.append(cats)
    gt_codes = np.concatenate(gt_codes, axis=0)
    gt_cats = np.concatenate(gt_cats, axis=0)

    # reals are label-matched to the fakes where the batch allows it, so the
    # critics judge geometry given the label instead of label frequencies
    n_changed_edges = len(changed_src)
    if n_changed_edges and gt_ci:
        gt_pred_arr = np.array(gt_pred)
        pick = rng.integers(0, len(gt_ci), size=n_changed_edges)
        for row, wanted in enumerate(changed_pred):
            matching = np.flatnonzero(gt_pred_arr == wanted)
            if matching.size:
                pick[row] = matching[int(rng.integers(matching.size))]
        gt_ci_arr, gt_cj_arr = np.array(gt_ci), np.array(gt_cj)
        gt_bi_arr, gt_bj_arr = np.stack(gt_bi), np.stack(gt_bj)
        batch.real_edges = (
            gt_ci_arr[pick], gt_cj_arr[pick], gt_pred_arr[pick],
            gt_bi_arr[pick], gt_bj_arr[pick],
        )
        # matching-aware negatives: the same real boxes under a predicate
        # that provably does not hold for them
        mis_rows = [e for e in pick if gt_false[e].size]
        if mis_rows:
            wrong = np.array([gt_false[e][int(rng.integers(gt_false[e].size))]
                              for e in mis_rows], dtype=np.int64)
            mis_rows = np.array(mis_rows, dtype=np.int64)
            batch.mismatch_edges = (
                gt_ci_arr[mis_rows], gt_cj_arr[mis_rows], wrong,
                gt_bi_arr[mis_rows], gt_bj_arr[mis_rows],
            )
    n_masked = int(mask.sum())
    if n_masked:
        pick = rng.integers(0, len(gt_cats), size=n_masked)
        for row, wanted in enumerate(hat_cats[mask]):
            matching = np.flatnonzero(gt_cats == wanted)
            if matching.size:
                pick[row] = matching[int(rng.integers(matching.size))]
        batch.real_codes = gt_codes[pick]
        batch.real_cats = gt_cats[pick]
    return batch


def false_labels_cached(g, scene, vocab):
    """Per ordered edge of g: the rule-checkable predicate ids that are
    geometrically FALSE for its ground-truth boxes. Used to build
    matching-aware negatives; cached on the scene."""
    from .metrics import RULE_PREDICATES, constraint_check

    cached = getattr(scene, "_false_labels", None)
    if cached is not None:
        return cached
    rule_ids = [(vocab.predicate_names.index(name), name) for name in RULE_PREDICATES
                if name in vocab.predicate_names]
    boxes = [o.box for o in scene.objects]
    src, dst, _pred = g.edge_arrays()
    out = []
    for a, b in zip(src, dst):
        false_ids = [pid for pid, name in rule_ids
                     if not constraint_check(name, boxes[a], boxes[b])]
        out.append(np.array(false_ids, dtype=np.int64))
    scene._false_labels = out
    return out


def scene_arrays_cached(scene, angle_bins):
    """Per-scene encoder arrays, cached on the scene object across epochs
    (training scenes are never mutated)."""
    cached = getattr(scene, "_encoder_arrays", None)
    if cached is not None and cached[0] == angle_bins:
        return cached[1]
    boxes7 = scene.boxes7()
    step = 360.0 / angle_bins
    bins = np.floor((boxes7[:, 6] % 360.0) / step).astype(np.int64) % angle_bins
    arrays = (boxes7[:, :6], bins, scene.codes())
    scene._encoder_arrays = (angle_bins, arrays)
    return arrays


def draw_noise(batch, latent_width, rng):
    batch.eps = rng.standard_normal((batch.merged_orig.num_nodes, latent_width))
    batch.t_noise = rng.standard_normal((batch.merged_hat.num_nodes, latent_width))
    return batch


def compute_losses(params, batch, cfg, train_bn=True):
    """Deterministic loss evaluation for a prepared batch.

    Returns (generator total, discriminator total or None, LossBreakdown).
    """
    hp = params.hp
    mu, logvar = encode_scene(params, batch.merged_orig, batch.box6, batch.bins, batch.codes)
    z = sample_latent(mu, logvar, ad.constant(batch.eps))

    # zero-padded latents over the edited graphs; originals keep their rows
    z_pad = ad.mul(ad.embedding_lookup(z, batch.z_gather), ad.constant(batch.orig_col))
    if batch.mask.any():
        src, dst, pred = batch.merged_hat.edge_arrays()
        structure = GraphStructure(src, dst, batch.merged_hat.num_nodes)
        t_in = ad.concat([z_pad, ad.constant(batch.t_noise * batch.mask[:, None])], axis=1)
        t_out = gcn_stack(params.manip_gcn, GraphFeatures(
            t_in, ad.embedding_lookup(params.manip_pred, pred), structure)).node_feats
        proj = ad.add(ad.matmul(t_out, params.manip_head_w), params.manip_head_b)
        z_final = ad.where_rows(batch.mask, proj, z_pad)
    else:
        z_final = z_pad

    pred_layout, pred_codes = decode_scene(params, z_final, batch.merged_hat)
    recon_box, recon_angle, recon_shape = loss_reconstruction(
        pred_layout, pred_codes, batch.recon_box6, batch.recon_bins,
        batch.recon_codes, batch.recon_rows)
    kl = loss_kl(mu, logvar)

    breakdown = LossBreakdown(
        recon_box=float(recon_box.values), recon_angle=float(recon_angle.values),
        recon_shape=float(recon_shape.values), kl=float(kl.values))

    total = ad.add(ad.add(recon_box, recon_angle),
                   ad.add(recon_shape, ad.scale(kl, cfg.kl_weight)))
    d_total = None

    use_box_gan = cfg.box_gan_weight > 0 and batch.real_edges is not None
    use_shape_gan = cfg.shape_gan_weight > 0 and batch.real_codes is not None
    if use_box_gan or use_shape_gan:
        # fake compositions mirror the inference splice: decoded boxes at the
        # changed nodes, the frozen ground-truth boxes everywhere else. The
        # angle channel is the argmax bin center on both sides (no gradient),
        # matching how scenes are materialized.
        pred_bins = np.argmax(pred_layout.angle_logits.values, axis=1)
        pred_frac = np.array([[bin_center(b, hp.angle_bins) / 360.0] for b in pred_bins])
        box7_pred = ad.concat([pred_layout.box6, ad.constant(pred_frac)], axis=1)
        box7 = ad.where_rows(batch.mask, box7_pred, ad.constant(batch.hat_gt_box7))
        if use_box_gan:
            fake = (batch.hat_cats[batch.changed_src], batch.hat_cats[batch.changed_dst],
                    batch.changed_pred,
                    ad.embedding_lookup(box7, batch.changed_src),
                    ad.embedding_lookup(box7, batch.changed_dst))
            g_box, d_box = loss_adversarial_box(params, batch.real_edges, fake, train_bn,
                                                mismatch=batch.mismatch_edges)
            total = ad.add(total, ad.scale(g_box, cfg.box_gan_weight))
            d_total = d_box
            breakdown.d_box_g = float(g_box.values)
            breakdown.d_box_d = float(d_box.values)
        if use_shape_gan:
            masked_rows = np.flatnonzero(batch.mask)
            fake_codes = ad.embedding_lookup(pred_codes, masked_rows)
            fake_cats = batch.hat_cats[masked_rows]
            g_shape, d_shape, aux = loss_adversarial_shape(
                params, batch.real_codes, batch.real_cats, fake_codes, fake_cats, train_bn)
            total = ad.add(total, ad.scale(g_shape, cfg.shape_gan_weight))
            d_total = d_shape if d_total is None else ad.add(d_total, d_shape)
            breakdown.d_shape_g = float(g_shape.values)
            breakdown.d_shape_d = float(d_shape.values)
            breakdown.aux = float(aux.values)

    breakdown.total = float(total.values)
    return total, d_total, breakdown


def train_step(params, samples, cfg, vocab, rng, update_disc=True):
    """One generator step, plus a discriminator step when scheduled."""
    batch = prepare_batch(samples, cfg, vocab, rng, angle_bins=params.hp.angle_bins)
    draw_noise(batch, params.hp.latent_width, rng)
    total, d_total, breakdown = compute_losses(params, batch, cfg)
    if not np.isfinite(breakdown.total):
        raise FloatingPointError("non-finite generator loss")

    total.backward()
    params.gen.ensure_grads()
    if cfg.grad_clip > 0:
        params.gen.clip_grad_norm(cfg.grad_clip)
    params.gen.adam_step(lr=cfg.lr)
    params.disc.zero_grad()

    if d_total is not None and update_disc:
        if not np.isfinite(float(d_total.values)):
            raise FloatingPointError("non-finite discriminator loss")
        d_total.backward()
        params.disc.ensure_grads()
        if cfg.grad_clip > 0:
            params.disc.clip_grad_norm(cfg.grad_clip)
        params.disc.adam_step(lr=cfg.lr)
        params.gen.zero_grad()
    return breakdown


def train(params, dataset, cfg, vocab, log_path=None, progress=None):
    """Full training run; returns the per-epoch loss history.

    dataset is a list of (SceneGraph, Scene) pairs. Deterministic for a fixed
    config seed. Raises TrainingDiverged when any loss goes non-finite.
    """
    if not dataset:
        raise ValueError("training needs a nonempty dataset")
    rng = np.random.default_rng(cfg.seed)
    history = []
    log_file = open(log_path, "a", encoding="utf-8") if log_path else None
    try:
        step_count = 0
        for epoch in range(cfg.epochs):
            order = rng.permutation(len(dataset))
            sums = None
            n_batches = 0
            for start in range(0, len(dataset), cfg.batch_size):
                chunk = [dataset[i] for i in order[start:start + cfg.batch_size]]
                update_disc = cfg.disc_interval > 0 and step_count % cfg.disc_interval == 0
                step_count += 1
                try:
                    breakdown = train_step(params, chunk, cfg, vocab, rng,
                                           update_disc=update_disc)
                except FloatingPointError as err:
                    raise TrainingDiverged(epoch, n_batches) from err
                vals = breakdown.to_dict()
                sums = vals if sums is None else {k: sums[k] + v for k, v in vals.items()}
                n_batches += 1
            epoch_means = LossBreakdown(**{k: v / n_batches for k, v in sums.items()})
            history.append(epoch_means)
            if log_file:
                log_file.write(json.dumps(epoch_means.to_dict(epoch=epoch), sort_keys=True) + "\n")
                log_file.flush()
            if progress:
                progress(epoch, epoch_means)
    finally:
        if log_file:
            log_file.close()
    return history
