"""Estimator-style front door for the whole system, following the familiar
fit / predict conventions: hyperparameters go in the constructor verbatim,
fitted state lives in trailing-underscore attributes, get_params/set_params
allow config plumbing, and inputs are validated before every operation."""

from __future__ import annotations

import inspect

import numpy as np

from .checkpoint import load_checkpoint, save_checkpoint
from .metrics import constraint_accuracy
from .model import HyperParams, ModelParams, generate, manipulate_scene
from .scenegraph import validate_graph
from .shapecodec import ShapeCodec
from .synthdata import default_vocabulary
from .training import TrainConfig, train


class NotFittedError(ValueError):
    pass


def check_graph(g, vocab):
    """Raise with the full violation report unless the graph is valid."""
    report = validate_graph(g, vocab)
    if report:
        lines = "; ".join(str(v) for v in report)
        raise ValueError(f"invalid scene graph: {lines}")
    return g


def check_scene_alignment(scene, g):
    """Scene objects must line up one-to-one with graph nodes by id."""
    ids_scene = [o.node_id for o in scene.objects]
    ids_graph = [n.id for n in g.nodes]
    if ids_scene != ids_graph:
        raise ValueError(f"scene ids {ids_scene} do not match graph ids {ids_graph}")
    return scene


class SceneGenerator:
    """Trainable scene generator with a fit/generate interface.

    Parameters mirror the training setup: network widths, optimization
    settings and loss weights. After fit (or load) the fitted model lives in
    params_, the vocabulary in vocab_ and the per-epoch losses in history_.
    """

    def __init__(self, feature_width=128, latent_width=64, angle_bins=24,
                 code_width=128, gcn_layers=5, disc_hidden=512,
                 lr=0.001, batch_size=8, epochs=100, kl_weight=0.1,
                 box_gan_weight=0.1, shape_gan_weight=0.1, grad_clip=15.0,
                 disc_interval=2, manipulation_mix=(0.4, 0.35, 0.25), seed=0,
                 n_points=256, manipulation_candidates=16):
        self.feature_width = feature_width
        self.latent_width = latent_width
        self.angle_bins = angle_bins
        self.code_width = code_width
        self.gcn_layers = gcn_layers
        self.disc_hidden = disc_hidden
        self.lr = lr
        self.batch_size = batch_size
        self.epochs = epochs
        self.kl_weight = kl_weight
        self.box_gan_weight = box_gan_weight
        self.shape_gan_weight = shape_gan_weight
        self.grad_clip = grad_clip
        self.disc_interval = disc_interval
        self.manipulation_mix = manipulation_mix
        self.seed = seed
        self.n_points = n_points
        self.manipulation_candidates = manipulation_candidates

    @classmethod
    def _param_names(cls):
        return [p for p in inspect.signature(cls.__init__).parameters if p != "self"]

    def get_params(self, deep=True):
        return {name: getattr(self, name) for name in self._param_names()}

    def set_params(self, **kwargs):
        valid = set(self._param_names())
        for key, value in kwargs.items():
            if key not in valid:
                raise ValueError(f"unknown parameter {key!r} for SceneGenerator")
            setattr(self, key, value)
        return self

    @property
    def is_fitted_(self):
        return hasattr(self, "params_")

    def _require_fitted(self):
        if not self.is_fitted_:
            raise NotFittedError("SceneGenerator is not fitted; call fit() or load()")

    def _hyperparams(self, vocab):
        return HyperParams(
            num_categories=vocab.num_objects, num_predicates=vocab.num_predicates,
            feature_width=self.feature_width, latent_width=self.latent_width,
            angle_bins=self.angle_bins, code_width=self.code_width,
            gcn_layers=self.gcn_layers, disc_hidden=self.disc_hidden)

    def fit(self, samples, vocab=None, log_path=None, progress=None):
        """Train on (SceneGraph, Scene) pairs; returns self."""
        vocab = vocab or default_vocabulary()
        for g, scene in samples:
            check_graph(g, vocab)
            check_scene_alignment(scene, g)
        params = ModelParams(self._hyperparams(vocab), seed=self.seed)
        cfg = TrainConfig(
            lr=self.lr, batch_size=self.batch_size, epochs=self.epochs, seed=self.seed,
            kl_weight=self.kl_weight, box_gan_weight=self.box_gan_weight,
            shape_gan_weight=self.shape_gan_weight, grad_clip=self.grad_clip,
            disc_interval=self.disc_interval,
            manipulation_mix=tuple(self.manipulation_mix))
        history = train(params, list(samples), cfg, vocab,
                        log_path=log_path, progress=progress)
        self.params_ = params
        self.vocab_ = vocab
        self.history_ = history
        self.codec_ = ShapeCodec(vocab.num_objects, self.code_width)
        return self

    def generate(self, g, seed=0, n_points=None):
        """Sample a scene for a validated graph; deterministic per seed."""
        self._require_fitted()
        check_graph(g, self.vocab_)
        return generate(self.params_, g, rng=seed, codec=self.codec_,
                        n_points=n_points or self.n_points)

    def manipulate(self, g, scene, change, seed=0, n_points=None):
        """Apply a graph change to an existing scene; returns
        (scene, changed node ids). Unchanged objects pass through verbatim."""
        self._require_fitted()
        check_graph(g, self.vocab_)
        check_scene_alignment(scene, g)
        return manipulate_scene(self.params_, g, scene, change, rng=seed,
                                codec=self.codec_, n_points=n_points or self.n_points,
                                candidates=self.manipulation_candidates)

    def score(self, samples, seed=0):
        """Mean generation-mode constraint accuracy over the given graphs."""
        self._require_fitted()
        totals = []
        for i, (g, _scene) in enumerate(samples):
            report = constraint_accuracy(self.generate(g, seed=seed + i), g, self.vocab_)
            if not np.isnan(report.total):
                totals.append(report.total)
        return float(np.mean(totals)) if totals else float("nan")

    def save(self, path):
        self._require_fitted()
        return save_checkpoint(path, self.params_, self.vocab_)

    @classmethod
    def load(cls, path):
        """Rebuild a fitted generator from a checkpoint."""
        params, vocab = load_checkpoint(path)
        hp = params.hp
        est = cls(feature_width=hp.feature_width, latent_width=hp.latent_width,
                  angle_bins=hp.angle_bins, code_width=hp.code_width,
                  gcn_layers=hp.gcn_layers, disc_hidden=hp.disc_hidden)
        est.params_ = params
        est.vocab_ = vocab
        est.history_ = []
        est.codec_ = ShapeCodec(vocab.num_objects, hp.code_width)
        return est
