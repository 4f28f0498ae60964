"""Residual triplet message-passing graph convolution.

Each layer runs three steps over directed (out, predicate, in) triplets:
a per-edge message MLP producing outbound/edge/inbound features, a mean
aggregation over all edges incident to each node, and a residual node update
MLP. Nodes without any incident edge pass through bit-identically.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor


@dataclass
class GcnLayerParams:
    """Weights for one layer: g1 maps (src + edge + dst) to (out-message +
    new edge feature + in-message), g2 maps the aggregate to a node update."""

    g1_w1: Tensor
    g1_b1: Tensor
    g1_w2: Tensor
    g1_b2: Tensor
    g2_w1: Tensor
    g2_b1: Tensor
    g2_w2: Tensor
    g2_b2: Tensor

    @property
    def width(self):
        return self.g2_w2.shape[1]


class GraphStructure:
    """Constant per-graph connectivity: incidence matrices for aggregation,
    degree normalization, and the isolated-node mask."""

    def __init__(self, src, dst, n_nodes):
        self.src = np.asarray(src, dtype=np.int64)
        self.dst = np.asarray(dst, dtype=np.int64)
        self.n_nodes = int(n_nodes)
        n_edges = len(self.src)
        if n_edges and (self.src.max() >= n_nodes or self.dst.max() >= n_nodes
                        or self.src.min() < 0 or self.dst.min() < 0):
            raise ValueError("triplet indices out of range")
        a_out = np.zeros((self.n_nodes, n_edges))
        a_in = np.zeros((self.n_nodes, n_edges))
        if n_edges:
            np.add.at(a_out, (self.src, np.arange(n_edges)), 1.0)
            np.add.at(a_in, (self.dst, np.arange(n_edges)), 1.0)
        degree = a_out.sum(axis=1) + a_in.sum(axis=1)
        self.a_out = ad.constant(a_out)
        self.a_in = ad.constant(a_in)
        # selection matrices so per-edge gathers run as matmuls
        self.sel_src = ad.constant(a_out.T.copy())
        self.sel_dst = ad.constant(a_in.T.copy())
        self.inv_degree = ad.constant((1.0 / np.maximum(degree, 1.0))[:, None])
        self.connected = degree > 0

    @property
    def n_edges(self):
        return len(self.src)


@dataclass
class GraphFeatures:
    node_feats: Tensor
    edge_feats: Tensor
    structure: GraphStructure


def mlp2(x, w1, b1, w2, b2):
    """The 2-layer perceptron used for both g1 and g2."""
    return ad.add(ad.matmul(ad.leaky_relu(ad.add(ad.matmul(x, w1), b1)), w2), b2)


def gcn_layer(params, gf):
    """One residual message-passing step; returns new graph features."""
    width = params.width
    if gf.node_feats.shape[1] != width or (
            gf.structure.n_edges and gf.edge_feats.shape[1] != width):
        raise ad.ShapeMismatch("gcn_layer", gf.node_feats.shape, (None, width))
    s = gf.structure
    if s.n_edges == 0:
        return gf

    phi_src = ad.matmul(s.sel_src, gf.node_feats)
    phi_dst = ad.matmul(s.sel_dst, gf.node_feats)
    triplet = ad.concat([phi_src, gf.edge_feats, phi_dst], axis=1)
    message = mlp2(triplet, params.g1_w1, params.g1_b1, params.g1_w2, params.g1_b2)
    psi_out = ad.slice_cols(message, 0, width)
    edge_next = ad.slice_cols(message, width, 2 * width)
    psi_in = ad.slice_cols(message, 2 * width, 3 * width)

    pooled = ad.add(ad.matmul(s.a_out, psi_out), ad.matmul(s.a_in, psi_in))
    rho = ad.mul(pooled, s.inv_degree)
    update = mlp2(rho, params.g2_w1, params.g2_b1, params.g2_w2, params.g2_b2)
    nodes_next = ad.masked_row_add(gf.node_feats, update, s.connected)
    return GraphFeatures(node_feats=nodes_next, edge_feats=edge_next, structure=s)


def gcn_stack(layers, gf):
    """Sequential application of gcn_layer over the whole stack."""
    for layer in layers:
        gf = gcn_layer(layer, gf)
    return gf


def init_linear(store, name, fan_in, fan_out, rng):
    """Uniform(-1/sqrt(fan_in), +1/sqrt(fan_in)) weight and bias tensors."""
    bound = 1.0 / np.sqrt(fan_in)
    w = store.add(f"{name}.w", rng.uniform(-bound, bound, size=(fan_in, fan_out)))
    b = store.add(f"{name}.b", rng.uniform(-bound, bound, size=(1, fan_out)))
    return w, b


def init_gcn_layer(store, name, width, rng):
    g1_w1, g1_b1 = init_linear(store, f"{name}.g1_0", 3 * width, width, rng)
    g1_w2, g1_b2 = init_linear(store, f"{name}.g1_1", width, 3 * width, rng)
    g2_w1, g2_b1 = init_linear(store, f"{name}.g2_0", width, width, rng)
    g2_w2, g2_b2 = init_linear(store, f"{name}.g2_1", width, width, rng)
    return GcnLayerParams(g1_w1, g1_b1, g1_w2, g1_b2, g2_w1, g2_b1, g2_w2, g2_b2)


def init_gcn_stack(store, name, width, rng, n_layers=5):
    return [init_gcn_layer(store, f"{name}.layer{i}", width, rng) for i in range(n_layers)]
