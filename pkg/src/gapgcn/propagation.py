"""Graph propagation layers with exact reverse-mode gradients.

Four forwards over a three-relation graph, all ReLU-activated and all
normalizing each incoming message by the receiver's in-degree:

* ``gcn_forward``: single shared weight, neighbors pooled across all
  relations, normalized by total in-degree.
* ``rgcn_forward``: per-relation weights W_r, per-relation in-degree
  normalization 1/c_{i,r}; relations with no incoming edges contribute
  nothing (no division by zero).
* ``gate_values``: per-edge scalar in (0,1) from the *sender's* hidden
  state, sigmoid(h_u . gate_w_r + gate_b_r).
* ``gated_rgcn_forward``: the R-GCN sum with each message scaled by its
  gate. ``gate_override`` pins gates for tests; with gates pinned to one
  the output equals ``rgcn_forward`` bitwise.

No bias term enters the propagation sums themselves. Per-node accumulation
follows a fixed edge order, so results are deterministic.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import kernels
from .graphs import Relation, RelationalGraph
from .layers import sigmoid


@dataclass
class RgcnLayerParams:
    """Per-relation weights for one layer; gate arrays may be absent."""

    w: tuple[np.ndarray, ...]                     # [Din, Dout] x 3
    gate_w: tuple[np.ndarray, ...] | None = None  # [Din] x 3
    gate_b: tuple[np.ndarray, ...] | None = None  # scalar-shaped x 3

    def __post_init__(self):
        if len(self.w) != len(Relation):
            raise ValueError("need one weight matrix per relation")
        shapes = {m.shape for m in self.w}
        if len(shapes) != 1:
            raise ValueError(f"relation weight shapes disagree: {shapes}")
        if self.gate_w is not None and len(self.gate_w) != len(Relation):
            raise ValueError("need one gate weight per relation")


def _check_dims(h, w):
    if h.shape[1] != w.shape[0]:
        raise ValueError(f"hidden width {h.shape[1]} does not match "
                         f"weight input width {w.shape[0]}")


def _relation_inv_degree(graph: RelationalGraph, rel: int, dtype):
    # indexed per edge by receiver; every referenced receiver has degree >= 1
    return (1.0 / graph.in_degree[graph.dst[rel], rel]).astype(dtype)


def gcn_forward(graph: RelationalGraph, h: np.ndarray, w: np.ndarray):
    """Plain GCN step: relations ignored, 1/c_i with c_i = total in-degree."""
    _check_dims(h, w)
    m = h @ w
    z = np.zeros((graph.num_nodes, w.shape[1]), dtype=h.dtype)
    c_total = graph.in_degree.sum(axis=1)
    coefs = []
    for rel in Relation:
        coef = (1.0 / c_total[graph.dst[rel]]).astype(h.dtype)
        kernels.scaled_row_scatter(z, graph.dst[rel], m, graph.src[rel], coef)
        coefs.append(coef)
    mask = z > 0
    cache = (graph, h, w, m, mask, coefs)
    return np.where(mask, z, 0), cache


def gcn_backward(cache, dout):
    graph, h, w, m, mask, coefs = cache
    dz = np.where(mask, dout, 0)
    dm = np.zeros_like(m)
    for rel in Relation:
        kernels.scaled_row_scatter(dm, graph.src[rel], dz, graph.dst[rel],
                                   coefs[rel])
    dw = h.T @ dm
    dh = dm @ w.T
    return dh, dw


def rgcn_forward(graph: RelationalGraph, h: np.ndarray,
                 params: RgcnLayerParams):
    """Per-relation weights and per-relation in-degree normalization."""
    _check_dims(h, params.w[0])
    dout_dim = params.w[0].shape[1]
    z = np.zeros((graph.num_nodes, dout_dim), dtype=h.dtype)
    msgs, coefs = [], []
    for rel in Relation:
        m = h @ params.w[rel]
        coef = _relation_inv_degree(graph, rel, h.dtype)
        kernels.scaled_row_scatter(z, graph.dst[rel], m, graph.src[rel], coef)
        msgs.append(m)
        coefs.append(coef)
    mask = z > 0
    cache = (graph, h, params, msgs, mask, coefs)
    return np.where(mask, z, 0), cache


def rgcn_backward(cache, dout):
    graph, h, params, msgs, mask, coefs = cache
    dz = np.where(mask, dout, 0)
    dh = np.zeros_like(h)
    dw = []
    for rel in Relation:
        dm = np.zeros_like(msgs[rel])
        kernels.scaled_row_scatter(dm, graph.src[rel], dz, graph.dst[rel],
                                   coefs[rel])
        dw.append(h.T @ dm)
        dh += dm @ params.w[rel].T
    return dh, tuple(dw)


def _node_gate_scores(graph, h, params):
    """Sigmoid of per-node sender scores, one array per relation."""
    gates = []
    for rel in Relation:
        s = h @ params.gate_w[rel]
        if params.gate_b is not None:
            s = s + params.gate_b[rel]
        gates.append(sigmoid(s))
    return gates


def gate_values(graph: RelationalGraph, h: np.ndarray,
                params: RgcnLayerParams) -> tuple[np.ndarray, ...]:
    """Per-edge gates, one array per relation, aligned with the edge lists."""
    if params.gate_w is None:
        raise ValueError("layer has no gate parameters")
    node_gates = _node_gate_scores(graph, h, params)
    return tuple(node_gates[rel][graph.src[rel]] for rel in Relation)


def gated_rgcn_forward(graph: RelationalGraph, h: np.ndarray,
                       params: RgcnLayerParams, gate_override=None):
    """R-GCN with each message scaled by its sender-computed gate.

    ``gate_override``, when given, is one per-edge gate array per relation
    (test hook); gate parameters then receive zero gradient.
    """
    _check_dims(h, params.w[0])
    dout_dim = params.w[0].shape[1]
    z = np.zeros((graph.num_nodes, dout_dim), dtype=h.dtype)
    if gate_override is None:
        node_gates = _node_gate_scores(graph, h, params)
        edge_gates = [node_gates[rel][graph.src[rel]] for rel in Relation]
    else:
        node_gates = None
        edge_gates = [np.asarray(g, dtype=h.dtype) for g in gate_override]
    msgs, inv_cs = [], []
    for rel in Relation:
        m = h @ params.w[rel]
        inv_c = _relation_inv_degree(graph, rel, h.dtype)
        coef = edge_gates[rel] * inv_c
        kernels.scaled_row_scatter(z, graph.dst[rel], m, graph.src[rel], coef)
        msgs.append(m)
        inv_cs.append(inv_c)
    mask = z > 0
    cache = (graph, h, params, msgs, mask, inv_cs, edge_gates, node_gates)
    return np.where(mask, z, 0), cache


def gated_rgcn_backward(cache, dout):
    """Gradients w.r.t. h, W_r, gate_w_r, gate_b_r.

    Message path: dM_r[u] += coef_e dZ[v] over edges (u,v); gate path turns
    per-edge <M_r[u], dZ[v]> / c_{v,r} into per-node sigmoid-score grads.
    """
    graph, h, params, msgs, mask, inv_cs, edge_gates, node_gates = cache
    dz = np.where(mask, dout, 0)
    dh = np.zeros_like(h)
    dw, dgate_w, dgate_b = [], [], []
    has_gate_grads = node_gates is not None
    for rel in Relation:
        src, dst = graph.src[rel], graph.dst[rel]
        coef = edge_gates[rel] * inv_cs[rel]
        dm = np.zeros_like(msgs[rel])
        kernels.scaled_row_scatter(dm, src, dz, dst, coef)
        dw.append(h.T @ dm)
        dh += dm @ params.w[rel].T
        if not has_gate_grads:
            continue
        edot = np.empty(len(src), dtype=h.dtype)
        kernels.edge_row_dot(msgs[rel], src, dz, dst, edot)
        dg_edges = edot * inv_cs[rel]
        dg_nodes = np.zeros(graph.num_nodes, dtype=h.dtype)
        kernels.scatter_add_1d(dg_nodes, src, dg_edges)
        g = node_gates[rel]
        ds_nodes = dg_nodes * g * (1.0 - g)
        dgate_w.append(h.T @ ds_nodes)
        if params.gate_b is not None:
            dgate_b.append(ds_nodes.sum(keepdims=True))
        dh += ds_nodes[:, None] * params.gate_w[rel][None, :]
    if not has_gate_grads:
        return dh, tuple(dw), None, None
    return (dh, tuple(dw), tuple(dgate_w),
            tuple(dgate_b) if params.gate_b is not None else None)
