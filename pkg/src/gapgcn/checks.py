"""Finite-difference verification of the full model, per setting.

Builds a tiny synthetic micro-batch (two 5-token examples) in float64 and
sweeps every parameter coordinate with central differences. Dropout stays
active but masks are frozen by reseeding the generator on every closure
call, so the loss is a deterministic function of the parameters.
"""

from __future__ import annotations

import numpy as np

from .gradcheck import grad_check
from .model import (ResolverConfig, Setting, build_model, loss_and_grads,
                    make_batch, prepare_examples)
from .params import Hyper
from .synth import make_synthetic_dataset

GRADCHECK_TOLERANCE = 1e-4


def micro_gradcheck(setting: Setting | str, seed: int, *,
                    n_examples: int = 2, tokens: int = 5,
                    eps: float = 1e-6, inject_fault: bool = False) -> float:
    """Max relative error between analytic and numeric gradients."""
    setting = Setting(setting)
    dim = 6
    dataset = make_synthetic_dataset(n_examples, embedding_dim=dim,
                                     seed=seed, min_tokens=tokens,
                                     max_tokens=tokens, max_sentences=1)
    config = ResolverConfig(
        setting=setting, embedding_dim=dim, bert_branch_dim=8, rgcn_dim=7,
        head_hidden_dim=9, rgcn_layers=1,
        hyper=Hyper(dropout_p=0.25, l2_lambda=1e-3, seed=seed))
    prepared = prepare_examples(dataset, dtype=np.float64)
    batch = make_batch(prepared)
    store = build_model(config, seed=seed, dtype=np.float64)

    def closure():
        rng = np.random.Generator(np.random.PCG64(
            np.random.SeedSequence(seed + 1)))
        loss, _ = loss_and_grads(store, config, batch, rng=rng)
        if inject_fault:
            store.grads["out.w"] *= -1.0
        return loss

    return grad_check(closure, store, eps=eps)
