"""Gated relational graph network for gendered ambiguous-pronoun resolution.

Frozen contextual token embeddings feed (a) a mention-pooling feed-forward
branch and (b) a gated relational graph layer over syntactic dependency
structure; four model settings ablate the two branches and the gating.
Everything trains with hand-derived gradients on numpy arrays; the edge
scatter/gather inner loops have a compiled extension with a pure-numpy
fallback (see :mod:`gapgcn.kernels`).
"""

from . import kernels
from .corpus import (Class, CorpusError, Dataset, GapExample,
                     TokenizedSnippet, audit_dataset, load_dataset,
                     save_dataset)
from .graphs import (NUM_RELATIONS, ROOT, BatchedGraph, GraphError, Relation,
                     RelationalGraph, batch, build_graph, graph_for_snippet)
from .model import (Prediction, ResolverConfig, Setting, build_model,
                    forward, loss_and_grads, predict_probs)
from .params import (Hyper, ParamStore, adam_step, load_checkpoint,
                     save_checkpoint)
from .runconfig import ConfigError, RunConfig, load_config
from .training import (EnsembleResult, ensemble_predict, kfold_split,
                       log_loss, micro_f1, run_experiment, train_fold)

__version__ = "0.1.0"

__all__ = [
    "BatchedGraph", "Class", "ConfigError", "CorpusError", "Dataset",
    "EnsembleResult", "GapExample", "GraphError", "Hyper", "NUM_RELATIONS",
    "ParamStore", "Prediction", "ROOT", "Relation", "RelationalGraph",
    "ResolverConfig", "RunConfig", "Setting", "TokenizedSnippet",
    "adam_step", "audit_dataset", "batch", "build_graph", "build_model",
    "ensemble_predict", "forward", "graph_for_snippet", "kernels",
    "kfold_split", "load_checkpoint", "load_config", "load_dataset",
    "log_loss", "loss_and_grads", "micro_f1", "predict_probs",
    "run_experiment", "save_checkpoint", "save_dataset", "train_fold",
    "__version__",
]
