"""End-to-end resolver: frozen token embeddings + graph propagation.

Four settings share one skeleton. A raw-embedding branch pools the pronoun
and both candidate mentions out of the frozen embeddings and compresses each
through a shared FC block; a graph branch propagates token states over the
dependency graph (plain or gated) and pools the same three spans. The head
takes the concatenation (or a single branch, per setting) through one FC
block and a 3-way output layer.

    BERT_ONLY       raw branch only; the graph is never touched
    RGCN_ONLY       gated propagation only, no raw branch
    CONCAT_NO_GATE  raw branch ++ ungated propagation
    CONCAT_GATED    raw branch ++ gated propagation

FC block = linear -> batch-norm -> ReLU -> dropout. Mention pooling is the
arithmetic mean over aligned tokens for both branches. Concatenation order
is [branch(A), branch(B), branch(P), graph(A), graph(B), graph(P)].
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .corpus import Dataset, align_span, gold_class
from .graphs import BatchedGraph, Relation, batch as batch_graphs, \
    graph_for_snippet
from .layers import (batchnorm_backward, batchnorm_forward, dropout_backward,
                     dropout_forward, linear_backward, linear_forward,
                     relu_backward, relu_forward, softmax, softmax_xent)
from .params import Hyper, ParamStore, l2_penalty
from .propagation import (RgcnLayerParams, gated_rgcn_backward,
                          gated_rgcn_forward, rgcn_backward, rgcn_forward)

_REL_SUFFIX = {Relation.HEAD_TO_DEP: "h2d",
               Relation.DEP_TO_HEAD: "d2h",
               Relation.SELF_LOOP: "self"}


class Setting(Enum):
    BERT_ONLY = "bert_only"
    RGCN_ONLY = "rgcn_only"
    CONCAT_NO_GATE = "concat_no_gate"
    CONCAT_GATED = "concat_gated"

    @property
    def uses_graph(self) -> bool:
        return self is not Setting.BERT_ONLY

    @property
    def uses_gates(self) -> bool:
        return self in (Setting.RGCN_ONLY, Setting.CONCAT_GATED)

    @property
    def uses_branch(self) -> bool:
        return self is not Setting.RGCN_ONLY


@dataclass
class ResolverConfig:
    setting: Setting
    embedding_dim: int
    bert_branch_dim: int = 512
    rgcn_dim: int = 256
    head_hidden_dim: int = 512
    rgcn_layers: int = 1
    pooling: str = "mean"
    use_gate_bias: bool = True
    hyper: Hyper = field(default_factory=Hyper)

    def __post_init__(self):
        if isinstance(self.setting, str):
            self.setting = Setting(self.setting)
        for name in ("embedding_dim", "bert_branch_dim", "rgcn_dim",
                     "head_hidden_dim"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if self.pooling != "mean":
            raise ValueError("only mean pooling is supported")
        if self.setting.uses_graph and self.rgcn_layers < 1:
            raise ValueError("rgcn_layers must be >= 1 for graph settings")

    @property
    def head_in_dim(self) -> int:
        dim = 0
        if self.setting.uses_branch:
            dim += 3 * self.bert_branch_dim
        if self.setting.uses_graph:
            dim += 3 * self.rgcn_dim
        return dim


@dataclass
class Prediction:
    p_a: float
    p_b: float
    p_neither: float


def as_predictions(probs: np.ndarray) -> list[Prediction]:
    return [Prediction(float(r[0]), float(r[1]), float(r[2])) for r in probs]


def config_record(config: ResolverConfig) -> dict:
    """JSON-serializable config snapshot embedded in checkpoints."""
    h = config.hyper
    return {
        "setting": config.setting.value,
        "embedding_dim": config.embedding_dim,
        "bert_branch_dim": config.bert_branch_dim,
        "rgcn_dim": config.rgcn_dim,
        "head_hidden_dim": config.head_hidden_dim,
        "rgcn_layers": config.rgcn_layers,
        "pooling": config.pooling,
        "use_gate_bias": config.use_gate_bias,
        "seed": h.seed,
        "hyper": {k: getattr(h, k) for k in
                  ("lr0", "lr_decay", "l2_lambda", "adam_beta1", "adam_beta2",
                   "adam_eps", "dropout_p", "bn_eps", "bn_momentum")},
    }


def config_from_record(rec: dict) -> ResolverConfig:
    hyper = Hyper(seed=int(rec.get("seed", 0)), **rec.get("hyper", {}))
    return ResolverConfig(
        setting=Setting(rec["setting"]),
        embedding_dim=int(rec["embedding_dim"]),
        bert_branch_dim=int(rec["bert_branch_dim"]),
        rgcn_dim=int(rec["rgcn_dim"]),
        head_hidden_dim=int(rec["head_hidden_dim"]),
        rgcn_layers=int(rec["rgcn_layers"]),
        pooling=rec.get("pooling", "mean"),
        use_gate_bias=bool(rec.get("use_gate_bias", True)),
        hyper=hyper,
    )


def _xavier(rng, shape, fan_in, fan_out):
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape)


def _add_fc_block(store, rng, name, din, dout):
    store.add_param(f"{name}.w", _xavier(rng, (din, dout), din, dout),
                    decay=True)
    store.add_param(f"{name}.b", np.zeros(dout))
    store.add_param(f"{name}.bn_gamma", np.ones(dout))
    store.add_param(f"{name}.bn_beta", np.zeros(dout))
    store.add_buffer(f"{name}.bn_mean", np.zeros(dout))
    store.add_buffer(f"{name}.bn_var", np.ones(dout))


def build_model(config: ResolverConfig, seed: int,
                dtype=np.float32) -> ParamStore:
    """Allocate and initialize parameters for the chosen setting only."""
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed)))
    store = ParamStore(dtype)
    d = config.embedding_dim

    if config.setting.uses_branch:
        _add_fc_block(store, rng, "branch", d, config.bert_branch_dim)

    if config.setting.uses_graph:
        din = d
        for layer in range(config.rgcn_layers):
            for rel in Relation:
                sfx = _REL_SUFFIX[rel]
                store.add_param(
                    f"rgcn{layer}.w_{sfx}",
                    _xavier(rng, (din, config.rgcn_dim), din,
                            config.rgcn_dim),
                    decay=True)
            if config.setting.uses_gates:
                for rel in Relation:
                    sfx = _REL_SUFFIX[rel]
                    store.add_param(f"rgcn{layer}.gate_w_{sfx}",
                                    _xavier(rng, (din,), din, 1), decay=True)
                if config.use_gate_bias:
                    for rel in Relation:
                        sfx = _REL_SUFFIX[rel]
                        # positive init keeps early gates ~0.73 so messages
                        # flow from the first steps
                        store.add_param(f"rgcn{layer}.gate_b_{sfx}",
                                        np.ones(1))
            din = config.rgcn_dim

    _add_fc_block(store, rng, "head", config.head_in_dim,
                  config.head_hidden_dim)
    store.add_param("out.w", _xavier(rng, (config.head_hidden_dim, 3),
                                     config.head_hidden_dim, 3), decay=True)
    store.add_param("out.b", np.zeros(3))
    return store


def layer_params(store: ParamStore, config: ResolverConfig,
                 layer: int) -> RgcnLayerParams:
    """View of one propagation layer's tensors inside the store."""
    w = tuple(store.params[f"rgcn{layer}.w_{_REL_SUFFIX[r]}"]
              for r in Relation)
    if not config.setting.uses_gates:
        return RgcnLayerParams(w=w)
    gw = tuple(store.params[f"rgcn{layer}.gate_w_{_REL_SUFFIX[r]}"]
               for r in Relation)
    gb = None
    if config.use_gate_bias:
        gb = tuple(store.params[f"rgcn{layer}.gate_b_{_REL_SUFFIX[r]}"]
                   for r in Relation)
    return RgcnLayerParams(w=w, gate_w=gw, gate_b=gb)


@dataclass
class PreparedExample:
    """One example with its graph, aligned spans, and typed embeddings."""

    id: str
    x: np.ndarray
    graph: object
    p_span: tuple[int, int]
    a_span: tuple[int, int]
    b_span: tuple[int, int]
    label: int


@dataclass
class ResolverBatch:
    ids: list[str]
    x: np.ndarray                 # [sum T, D]
    graph: BatchedGraph
    p_spans: np.ndarray           # int64 [N, 2], global token coords
    a_spans: np.ndarray
    b_spans: np.ndarray
    labels: np.ndarray            # int64 [N]

    def __len__(self) -> int:
        return len(self.ids)


def prepare_examples(dataset: Dataset,
                     dtype=np.float32) -> list[PreparedExample]:
    out = []
    for ex, sn in dataset.examples:
        out.append(PreparedExample(
            id=ex.id,
            x=np.ascontiguousarray(sn.embeddings, dtype=dtype),
            graph=graph_for_snippet(sn),
            p_span=align_span(sn, ex.pronoun_offset, ex.pronoun),
            a_span=align_span(sn, ex.a_offset, ex.a_text),
            b_span=align_span(sn, ex.b_offset, ex.b_text),
            label=gold_class(ex).value,
        ))
    return out


def make_batch(prepared: list[PreparedExample],
               indices=None) -> ResolverBatch:
    if indices is None:
        indices = range(len(prepared))
    chosen = [prepared[i] for i in indices]
    if not chosen:
        raise ValueError("empty batch")
    graph = batch_graphs([p.graph for p in chosen])
    spans = {"p": [], "a": [], "b": []}
    for p, (lo, _hi) in zip(chosen, graph.boundaries):
        for key, span in (("p", p.p_span), ("a", p.a_span), ("b", p.b_span)):
            spans[key].append((span[0] + lo, span[1] + lo))
    return ResolverBatch(
        ids=[p.id for p in chosen],
        x=np.concatenate([p.x for p in chosen], axis=0),
        graph=graph,
        p_spans=np.asarray(spans["p"], dtype=np.int64),
        a_spans=np.asarray(spans["a"], dtype=np.int64),
        b_spans=np.asarray(spans["b"], dtype=np.int64),
        labels=np.asarray([p.label for p in chosen], dtype=np.int64),
    )


def pool_mention(h: np.ndarray, span: tuple[int, int]) -> np.ndarray:
    lo, hi = span
    if not 0 <= lo < hi <= h.shape[0]:
        raise ValueError(f"bad mention span [{lo}, {hi}) for {h.shape[0]} "
                         "rows")
    return h[lo:hi].mean(axis=0)


def _pool_rows(h, spans):
    out = np.empty((len(spans), h.shape[1]), dtype=h.dtype)
    for i, span in enumerate(spans):
        out[i] = pool_mention(h, span)
    return out


def _pool_rows_backward(dpool, spans, dh):
    for i, (lo, hi) in enumerate(spans):
        dh[lo:hi] += dpool[i] / (hi - lo)


def _fc_block_forward(store, name, x, *, mode, hyper, rng):
    y, lin_cache = linear_forward(x, store.params[f"{name}.w"],
                                  store.params[f"{name}.b"])
    y, bn_cache = batchnorm_forward(
        y, store.params[f"{name}.bn_gamma"], store.params[f"{name}.bn_beta"],
        store.buffers[f"{name}.bn_mean"], store.buffers[f"{name}.bn_var"],
        mode=mode, eps=hyper.bn_eps, momentum=hyper.bn_momentum)
    y, relu_cache = relu_forward(y)
    y, drop_cache = dropout_forward(y, hyper.dropout_p, mode, rng)
    return y, (lin_cache, bn_cache, relu_cache, drop_cache)


def _fc_block_backward(store, name, cache, dy):
    lin_cache, bn_cache, relu_cache, drop_cache = cache
    dy = dropout_backward(drop_cache, dy)
    dy = relu_backward(relu_cache, dy)
    dy, dgamma, dbeta = batchnorm_backward(bn_cache, dy)
    dx, dw, db = linear_backward(lin_cache, dy)
    store.grads[f"{name}.w"] += dw
    store.grads[f"{name}.b"] += db
    store.grads[f"{name}.bn_gamma"] += dgamma
    store.grads[f"{name}.bn_beta"] += dbeta
    return dx


def _propagation_gate_overrides(config, gate_override):
    """Normalize the test-only gate pin to one entry per layer.

    A list means per-layer overrides (length must match rgcn_layers); a
    tuple of three per-relation edge arrays is broadcast to every layer.
    """
    if gate_override is None:
        return [None] * config.rgcn_layers
    if isinstance(gate_override, list):
        if len(gate_override) != config.rgcn_layers:
            raise ValueError("need one gate override per propagation layer")
        return gate_override
    return [gate_override] * config.rgcn_layers


def _forward_full(store, config, batch, *, mode, rng, gate_override):
    if store.dtype != batch.x.dtype:
        raise ValueError(f"store dtype {store.dtype} != batch dtype "
                         f"{batch.x.dtype}")
    hyper = config.hyper
    setting = config.setting
    n = len(batch)
    cache: dict = {"n": n}

    pieces = []
    if setting.uses_branch:
        pooled = np.concatenate([_pool_rows(batch.x, batch.a_spans),
                                 _pool_rows(batch.x, batch.b_spans),
                                 _pool_rows(batch.x, batch.p_spans)], axis=0)
        y, branch_cache = _fc_block_forward(store, "branch", pooled,
                                            mode=mode, hyper=hyper, rng=rng)
        cache["branch"] = branch_cache
        pieces.extend([y[:n], y[n:2 * n], y[2 * n:]])

    if setting.uses_graph:
        overrides = _propagation_gate_overrides(config, gate_override)
        h = batch.x
        layer_caches = []
        for layer in range(config.rgcn_layers):
            lp = layer_params(store, config, layer)
            if setting.uses_gates:
                h, lc = gated_rgcn_forward(batch.graph, h, lp,
                                           gate_override=overrides[layer])
            else:
                h, lc = rgcn_forward(batch.graph, h, lp)
            layer_caches.append(lc)
        cache["layers"] = layer_caches
        cache["h_final_shape"] = h.shape
        pieces.extend([_pool_rows(h, batch.a_spans),
                       _pool_rows(h, batch.b_spans),
                       _pool_rows(h, batch.p_spans)])

    head_in = np.concatenate(pieces, axis=1)
    hidden, head_cache = _fc_block_forward(store, "head", head_in,
                                           mode=mode, hyper=hyper, rng=rng)
    cache["head"] = head_cache
    logits, out_cache = linear_forward(hidden, store.params["out.w"],
                                       store.params["out.b"])
    cache["out"] = out_cache
    return logits, cache


def _backward_full(store, config, batch, cache, dlogits):
    setting = config.setting
    n = cache["n"]
    dhidden, dw, db = linear_backward(cache["out"], dlogits)
    store.grads["out.w"] += dw
    store.grads["out.b"] += db
    dhead_in = _fc_block_backward(store, "head", cache["head"], dhidden)

    col = 0
    if setting.uses_branch:
        bb = config.bert_branch_dim
        dbranch = np.concatenate([dhead_in[:, 0:bb],
                                  dhead_in[:, bb:2 * bb],
                                  dhead_in[:, 2 * bb:3 * bb]], axis=0)
        _fc_block_backward(store, "branch", cache["branch"], dbranch)
        col = 3 * bb

    if setting.uses_graph:
        rg = config.rgcn_dim
        dh = np.zeros(cache["h_final_shape"], dtype=batch.x.dtype)
        _pool_rows_backward(dhead_in[:, col:col + rg], batch.a_spans, dh)
        _pool_rows_backward(dhead_in[:, col + rg:col + 2 * rg],
                            batch.b_spans, dh)
        _pool_rows_backward(dhead_in[:, col + 2 * rg:col + 3 * rg],
                            batch.p_spans, dh)
        for layer in reversed(range(config.rgcn_layers)):
            lc = cache["layers"][layer]
            sfx = _REL_SUFFIX
            if setting.uses_gates:
                dh, dws, dgws, dgbs = gated_rgcn_backward(lc, dh)
                for rel in Relation:
                    store.grads[f"rgcn{layer}.w_{sfx[rel]}"] += dws[rel]
                if dgws is not None:
                    for rel in Relation:
                        store.grads[f"rgcn{layer}.gate_w_{sfx[rel]}"] += \
                            dgws[rel]
                if dgbs is not None:
                    for rel in Relation:
                        store.grads[f"rgcn{layer}.gate_b_{sfx[rel]}"] += \
                            dgbs[rel]
            else:
                dh, dws = rgcn_backward(lc, dh)
                for rel in Relation:
                    store.grads[f"rgcn{layer}.w_{sfx[rel]}"] += dws[rel]
        # dh at layer 0 is the gradient w.r.t. the frozen embeddings; dropped


def forward(store: ParamStore, config: ResolverConfig, batch: ResolverBatch,
            mode: str = "eval", rng=None, gate_override=None) -> np.ndarray:
    """Probabilities [N, 3] over (A, B, NEITHER)."""
    if mode == "train" and config.hyper.dropout_p > 0 and rng is None:
        raise ValueError("train-mode forward with dropout needs an rng")
    logits, _ = _forward_full(store, config, batch, mode=mode, rng=rng,
                              gate_override=gate_override)
    return softmax(logits)


def loss_and_grads(store: ParamStore, config: ResolverConfig,
                   batch: ResolverBatch, rng=None, mode: str = "train",
                   gate_override=None) -> tuple[float, np.ndarray]:
    """Mean cross-entropy + L2 penalty; fills store.grads (overwriting)."""
    if mode == "train" and config.hyper.dropout_p > 0 and rng is None:
        raise ValueError("training with dropout needs an rng")
    store.zero_grads()
    logits, cache = _forward_full(store, config, batch, mode=mode, rng=rng,
                                  gate_override=gate_override)
    data_loss, dlogits = softmax_xent(logits, batch.labels)
    _backward_full(store, config, batch, cache, dlogits)
    penalty = l2_penalty(store, config.hyper.l2_lambda)
    return data_loss + penalty, softmax(logits)


def predict_probs(store: ParamStore, config: ResolverConfig,
                  prepared: list[PreparedExample],
                  batch_size: int = 256) -> np.ndarray:
    """Eval-mode probabilities for a whole example list, in order."""
    rows = []
    for start in range(0, len(prepared), batch_size):
        chunk = make_batch(prepared, range(start,
                                           min(start + batch_size,
                                               len(prepared))))
        rows.append(forward(store, config, chunk, mode="eval"))
    return np.concatenate(rows, axis=0)
