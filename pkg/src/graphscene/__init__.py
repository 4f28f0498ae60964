"""Scene generation and manipulation from semantic scene graphs.

The package trains a variational graph autoencoder that maps scene graphs to
7DoF oriented boxes and shape codes per object, supports latent-space scene
manipulation driven by graph edits, and ships the data-preparation geometry,
synthetic dataset, rule-based evaluation suite, CLI and studio service around
it. The `SceneGenerator` estimator is the main entry point.
"""

from .estimator import NotFittedError, SceneGenerator, check_graph, check_scene_alignment
from .geometry import OrientedBox, Plane
from .model import HyperParams, Scene, SceneObject
from .scenegraph import (
    EdgeTriplet,
    GraphChange,
    ObjectNode,
    SceneGraph,
    Vocabulary,
    apply_change,
    make_change,
    simulate_manipulation,
    validate_graph,
)
from .shapecodec import PrimitiveParams, ShapeCodec
from .synthdata import SynthConfig, default_vocabulary, make_dataset, synth_scene
from .training import TrainConfig

__version__ = "0.1.0"

__all__ = [
    "EdgeTriplet",
    "GraphChange",
    "HyperParams",
    "NotFittedError",
    "ObjectNode",
    "OrientedBox",
    "Plane",
    "PrimitiveParams",
    "Scene",
    "SceneGenerator",
    "SceneGraph",
    "SceneObject",
    "ShapeCodec",
    "SynthConfig",
    "TrainConfig",
    "Vocabulary",
    "apply_change",
    "check_graph",
    "check_scene_alignment",
    "default_vocabulary",
    "make_change",
    "make_dataset",
    "simulate_manipulation",
    "synth_scene",
    "validate_graph",
]
