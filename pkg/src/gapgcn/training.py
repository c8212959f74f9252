"""K-fold ensemble training, checkpoint selection, and evaluation metrics.

Each fold trains on the other k-1 folds and keeps the checkpoint with the
best held-out log-loss (ties resolved toward the earlier epoch); the
ensemble averages per-fold test probabilities in fold order. With
RGCN_THREADS > 1 folds train in worker processes; each fold is internally
deterministic and results are reduced in fold order, so metrics do not
depend on the worker count. RGCN_THREADS=0 (default) is the single-threaded
bitwise-reproducible mode.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace

import numpy as np

from .corpus import Class, Dataset, GapExample
from .model import (PreparedExample, ResolverConfig, build_model,
                    config_record, loss_and_grads, make_batch,
                    prepare_examples, predict_probs)
from .params import ParamStore, adam_step
from .runconfig import RunConfig

PROB_CLAMP = 1e-15


@dataclass
class FoldPlan:
    k: int
    assignments: np.ndarray     # int64 [n], fold id per example
    seed: int


@dataclass
class FoldResult:
    fold_id: int
    store: ParamStore           # best-validation checkpoint
    best_epoch: int
    best_val_log_loss: float
    curve: list[tuple[int, float, float, float]]  # epoch, lr, train, val
    init_seed: int


@dataclass
class EnsembleResult:
    plan: FoldPlan
    folds: list[FoldResult]
    test_probs: np.ndarray | None
    metrics: dict[str, float]
    report: str


def kfold_split(n: int, k: int, seed: int) -> FoldPlan:
    """Deterministic shuffled partition into k folds of near-equal size."""
    if k < 2:
        raise ValueError(f"need k >= 2 folds, got {k}")
    if n < k:
        raise ValueError(f"cannot split {n} examples into {k} folds")
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed)))
    perm = rng.permutation(n)
    assignments = np.empty(n, dtype=np.int64)
    assignments[perm] = np.arange(n, dtype=np.int64) % k
    return FoldPlan(k=k, assignments=assignments, seed=seed)


def _labels_of(prepared: list[PreparedExample]) -> np.ndarray:
    return np.asarray([p.label for p in prepared], dtype=np.int64)


def log_loss(probs: np.ndarray, labels) -> float:
    """Multi-class log-loss, natural logarithm, probabilities clamped."""
    labels = np.asarray([l.value if isinstance(l, Class) else int(l)
                         for l in labels])
    n = len(labels)
    if n == 0:
        raise ValueError("log_loss over zero examples")
    p = np.clip(np.asarray(probs, dtype=np.float64),
                PROB_CLAMP, 1.0 - PROB_CLAMP)
    return float(-np.log(p[np.arange(n), labels]).mean())


def micro_f1(probs: np.ndarray, examples: list[GapExample]) -> float:
    """Micro-averaged F1 over the per-name coreference decisions.

    Each example contributes two binary decisions (pronoun-A, pronoun-B);
    the predicted positive is the argmax class, gold positives come from
    the coref flags.
    """
    pred = np.argmax(probs, axis=1)
    tp = fp = fn = 0
    for cls, ex in zip(pred, examples):
        for gold, pred_pos in ((ex.a_coref, cls == Class.A.value),
                               (ex.b_coref, cls == Class.B.value)):
            if pred_pos and gold:
                tp += 1
            elif pred_pos and not gold:
                fp += 1
            elif gold:
                fn += 1
    denom = 2 * tp + fp + fn
    return 0.0 if denom == 0 else 2.0 * tp / denom


def _epoch_batches(n: int, batch_size: int) -> list[np.ndarray]:
    """Index chunks of batch_size; a trailing singleton merges backward
    (batch-norm needs at least two rows)."""
    bounds = list(range(0, n, batch_size))
    chunks = [np.arange(lo, min(lo + batch_size, n)) for lo in bounds]
    if len(chunks) > 1 and len(chunks[-1]) == 1:
        chunks[-2] = np.concatenate([chunks[-2], chunks[-1]])
        chunks.pop()
    return chunks


def _fold_seed(seed: int, fold_id: int, stream: int) -> int:
    ss = np.random.SeedSequence(entropy=seed, spawn_key=(fold_id, stream))
    return int(ss.generate_state(1)[0])


def _with_embedding_dim(config: RunConfig, dim: int) -> RunConfig:
    """Fill embedding_dim from the data, or verify an explicit value."""
    if config.embedding_dim == 0:
        return replace(config, embedding_dim=dim)
    if config.embedding_dim != dim:
        raise ValueError(f"config embedding_dim {config.embedding_dim} "
                         f"does not match dataset width {dim}")
    return config


def train_fold(data: Dataset | list[PreparedExample], plan: FoldPlan,
               fold_id: int, config: RunConfig,
               dtype=np.float32) -> FoldResult:
    """Train on k-1 folds, validate on the held-out fold each epoch."""
    if not 0 <= fold_id < plan.k:
        raise ValueError(f"fold id {fold_id} out of range for k={plan.k}")
    prepared = data if isinstance(data, list) else prepare_examples(data,
                                                                    dtype)
    if not prepared:
        raise ValueError("cannot train on an empty dataset")
    config = _with_embedding_dim(config, int(prepared[0].x.shape[1]))
    rcfg = config.resolver_config()
    hyper = rcfg.hyper
    train_idx = np.nonzero(plan.assignments != fold_id)[0]
    val_prepared = [prepared[i]
                    for i in np.nonzero(plan.assignments == fold_id)[0]]
    val_labels = _labels_of(val_prepared)

    init_seed = _fold_seed(hyper.seed, fold_id, 0)
    store = build_model(rcfg, seed=init_seed, dtype=dtype)
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence(
        entropy=hyper.seed, spawn_key=(fold_id, 1))))

    best: tuple[int, float, ParamStore] | None = None
    curve = []
    for epoch in range(config.epochs):
        lr_t = hyper.lr0 * hyper.lr_decay ** epoch
        order = rng.permutation(len(train_idx))
        losses = []
        for chunk in _epoch_batches(len(train_idx), config.batch_size):
            batch = make_batch(prepared, train_idx[order[chunk]])
            loss, _ = loss_and_grads(store, rcfg, batch, rng=rng)
            if not math.isfinite(loss):
                raise RuntimeError(
                    f"non-finite training loss {loss} (fold {fold_id}, "
                    f"epoch {epoch}, lr {lr_t:g})")
            adam_step(store, hyper, lr_t)
            losses.append(loss)
        val_probs = predict_probs(store, rcfg, val_prepared)
        val_ll = log_loss(val_probs, val_labels)
        if not math.isfinite(val_ll):
            raise RuntimeError(
                f"non-finite validation loss (fold {fold_id}, epoch {epoch}, "
                f"lr {lr_t:g})")
        curve.append((epoch, lr_t, float(np.mean(losses)), val_ll))
        if best is None or val_ll < best[1]:
            best = (epoch, val_ll, store.clone())
    assert best is not None
    return FoldResult(fold_id=fold_id, store=best[2], best_epoch=best[0],
                      best_val_log_loss=best[1], curve=curve,
                      init_seed=init_seed)


def ensemble_predict(models: list[tuple[ParamStore, ResolverConfig]],
                     data: Dataset | list[PreparedExample]) -> np.ndarray:
    """Arithmetic mean of per-model probability triples, in model order."""
    if not models:
        raise ValueError("ensemble needs at least one model")
    records = [config_record(cfg) for _, cfg in models]
    for rec in records[1:]:
        if rec != records[0]:
            raise ValueError("ensemble models have mismatched configs")
    dtype = models[0][0].dtype
    prepared = data if isinstance(data, list) else prepare_examples(data,
                                                                    dtype)
    total = None
    for store, cfg in models:
        probs = predict_probs(store, cfg, prepared).astype(np.float64)
        total = probs if total is None else total + probs
    return total / len(models)


def _train_fold_task(args):
    prepared, plan, fold_id, config = args
    return train_fold(prepared, plan, fold_id, config)


def worker_count() -> int:
    return int(os.environ.get("RGCN_THREADS", "0"))


def run_experiment(dataset_train: Dataset, dataset_test: Dataset | None,
                   config: RunConfig) -> EnsembleResult:
    """Full pipeline: split, train every fold, ensemble, score, report."""
    config = _with_embedding_dim(config, dataset_train.embedding_dim)
    prepared_train = prepare_examples(dataset_train)
    if dataset_test is not None \
            and dataset_test.embedding_dim != dataset_train.embedding_dim:
        raise ValueError("train/test embedding widths disagree")
    plan = kfold_split(len(prepared_train), config.folds,
                       config.resolver_config().hyper.seed)

    workers = worker_count()
    if workers > 1:
        tasks = [(prepared_train, plan, f, config) for f in range(plan.k)]
        with ProcessPoolExecutor(max_workers=min(workers, plan.k)) as pool:
            folds = list(pool.map(_train_fold_task, tasks))
    else:
        folds = [train_fold(prepared_train, plan, f, config)
                 for f in range(plan.k)]

    rcfg = config.resolver_config()
    models = [(fr.store, rcfg) for fr in folds]
    metrics: dict[str, float] = {}
    test_probs = None
    if dataset_test is not None:
        prepared_test = prepare_examples(dataset_test)
        test_probs = ensemble_predict(models, prepared_test)
        metrics["test_log_loss"] = log_loss(test_probs,
                                            _labels_of(prepared_test))
        metrics["test_micro_f1"] = micro_f1(
            test_probs, [ex for ex, _ in dataset_test.examples])

    report = build_report(config, folds, metrics, len(dataset_train),
                          0 if dataset_test is None else len(dataset_test))
    return EnsembleResult(plan=plan, folds=folds, test_probs=test_probs,
                          metrics=metrics, report=report)


def build_report(config: RunConfig, folds: list[FoldResult],
                 metrics: dict[str, float], n_train: int,
                 n_test: int) -> str:
    """Deterministic run report (config echo, fold curves, metrics, seeds).

    Wall-clock timing deliberately lives in a separate sidecar file so two
    runs with the same seed produce byte-identical reports.
    """
    lines = ["gapgcn run report", "================="]
    for key, val in config.echo().items():
        lines.append(f"{key} = {val}")
    lines.append(f"train_examples = {n_train}")
    lines.append(f"test_examples = {n_test}")
    for fr in folds:
        lines.append("")
        lines.append(f"[fold {fr.fold_id}]")
        for epoch, lr, train, val in fr.curve:
            lines.append(f"epoch {epoch}  lr {lr:.8f}  "
                         f"train_loss {train:.6f}  val_log_loss {val:.6f}")
        lines.append(f"best_epoch = {fr.best_epoch}")
        lines.append(f"best_val_log_loss = {fr.best_val_log_loss:.6f}")
    lines.append("")
    lines.append("[metrics]")
    if metrics:
        for key in sorted(metrics):
            lines.append(f"{key} = {metrics[key]:.6f}")
    else:
        lines.append("(no test set)")
    lines.append("")
    lines.append("[seeds]")
    for fr in folds:
        lines.append(f"fold {fr.fold_id} init_seed = {fr.init_seed}")
    return "\n".join(lines) + "\n"
