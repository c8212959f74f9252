"""K-fold training harness, metrics, ensembling, determinism."""

import numpy as np
import pytest

from gapgcn.corpus import Class
from gapgcn.layers import softmax, softmax_xent
from gapgcn.model import build_model, prepare_examples
from gapgcn.runconfig import RunConfig
from gapgcn.synth import make_synthetic_dataset
from gapgcn.training import (_epoch_batches, ensemble_predict, kfold_split,
                             log_loss, micro_f1, run_experiment, train_fold)


def small_run_config(**overrides):
    base = dict(setting="concat_gated", bert_branch_dim=8, rgcn_dim=7,
                head_hidden_dim=9, epochs=2, folds=2, batch_size=4,
                seed=13, dropout_p=0.1)
    base.update(overrides)
    return RunConfig(**base)


class TestKFoldSplit:
    def test_partition_covers_everything_with_balanced_sizes(self):
        plan = kfold_split(23, 5, seed=0)
        sizes = np.bincount(plan.assignments, minlength=5)
        assert sizes.sum() == 23
        assert sizes.max() - sizes.min() <= 1

    def test_deterministic_in_seed(self):
        a = kfold_split(40, 4, seed=9)
        b = kfold_split(40, 4, seed=9)
        c = kfold_split(40, 4, seed=10)
        np.testing.assert_array_equal(a.assignments, b.assignments)
        assert not np.array_equal(a.assignments, c.assignments)

    def test_exact_multiple_gives_equal_folds(self):
        plan = kfold_split(20, 5, seed=1)
        assert set(np.bincount(plan.assignments)) == {4}

    def test_rejects_degenerate_configs(self):
        with pytest.raises(ValueError):
            kfold_split(10, 1, seed=0)
        with pytest.raises(ValueError):
            kfold_split(3, 4, seed=0)


class TestLogLoss:
    def test_uniform_is_log3(self):
        probs = np.full((5, 3), 1.0 / 3.0)
        assert abs(log_loss(probs, [0, 1, 2, 0, 1]) - np.log(3)) < 1e-9

    def test_two_example_closed_form(self):
        probs = np.array([[0.5, 0.25, 0.25], [0.5, 0.25, 0.25]])
        got = log_loss(probs, [Class.A, Class.B])
        want = -(np.log(0.5) + np.log(0.25)) / 2
        assert got == pytest.approx(want, abs=1e-12)
        assert got == pytest.approx(1.039721, abs=1e-6)

    def test_perfect_predictions_bounded_by_clamp(self):
        probs = np.eye(3)
        assert 0 <= log_loss(probs, [0, 1, 2]) <= 1e-14

    def test_zero_probability_clamped_not_infinite(self):
        probs = np.array([[0.0, 1.0, 0.0]])
        val = log_loss(probs, [0])
        assert np.isfinite(val)
        assert val == pytest.approx(-np.log(1e-15), rel=1e-9)

    def test_consistent_with_cross_entropy_loss(self, rng):
        logits = rng.standard_normal((10, 3))
        labels = rng.integers(0, 3, 10)
        xent, _ = softmax_xent(logits, labels)
        assert abs(log_loss(softmax(logits), labels) - xent) < 1e-9

    def test_empty_rejected(self):
        with pytest.raises(ValueError):
            log_loss(np.zeros((0, 3)), [])


def _examples_with_gold(gold_flags):
    """Synthetic examples with a_coref/b_coref forced per example."""
    ds = make_synthetic_dataset(len(gold_flags), embedding_dim=4, seed=0)
    out = []
    for (ex, _), (a, b) in zip(ds.examples, gold_flags):
        ex.a_coref, ex.b_coref = a, b
        out.append(ex)
    return out


class TestMicroF1:
    def test_all_correct_is_one(self):
        exs = _examples_with_gold([(True, False), (False, True),
                                   (False, False)])
        probs = np.array([[0.9, 0.05, 0.05],
                          [0.1, 0.8, 0.1],
                          [0.2, 0.2, 0.6]])
        assert micro_f1(probs, exs) == 1.0

    def test_all_neither_with_positives_is_zero(self):
        exs = _examples_with_gold([(True, False), (False, True)])
        probs = np.array([[0.1, 0.1, 0.8], [0.1, 0.1, 0.8]])
        assert micro_f1(probs, exs) == 0.0

    def test_three_example_hand_fixture_is_half(self):
        # one A hit (TP), one B missed (FN), one spurious A (FP)
        exs = _examples_with_gold([(True, False), (False, True),
                                   (False, False)])
        probs = np.array([[0.8, 0.1, 0.1],     # A, correct
                          [0.1, 0.2, 0.7],     # NEITHER, missing gold B
                          [0.9, 0.05, 0.05]])  # A, gold is NEITHER
        assert micro_f1(probs, exs) == 0.5

    def test_invariant_to_example_order(self, rng):
        exs = _examples_with_gold([(True, False), (False, True),
                                   (False, False), (True, False)])
        probs = rng.random((4, 3))
        perm = [2, 0, 3, 1]
        assert micro_f1(probs, exs) == micro_f1(probs[perm],
                                                [exs[i] for i in perm])


class TestEpochBatches:
    def test_plain_chunking(self):
        chunks = _epoch_batches(10, 4)
        assert [len(c) for c in chunks] == [4, 4, 2]
        np.testing.assert_array_equal(np.concatenate(chunks), np.arange(10))

    def test_trailing_singleton_merges_backward(self):
        chunks = _epoch_batches(9, 4)
        assert [len(c) for c in chunks] == [4, 5]

    def test_single_chunk(self):
        assert [len(c) for c in _epoch_batches(3, 8)] == [3]


class TestTrainFold:
    def test_returns_curve_and_best_checkpoint(self):
        ds = make_synthetic_dataset(12, embedding_dim=5, seed=2)
        cfg = small_run_config(epochs=3)
        plan = kfold_split(12, 2, cfg.seed)
        result = train_fold(ds, plan, 0, cfg)
        assert len(result.curve) == 3
        assert 0 <= result.best_epoch < 3
        vals = [v for _, _, _, v in result.curve]
        assert result.best_val_log_loss == pytest.approx(min(vals))

    def test_zero_learning_rate_freezes_parameters(self):
        # bn_momentum = 0 also pins the running buffers, otherwise they
        # drift during train-mode forwards and validation loss moves
        ds = make_synthetic_dataset(10, embedding_dim=5, seed=2)
        cfg = small_run_config(lr0=0.0, l2_lambda=0.0, epochs=3,
                               bn_momentum=0.0)
        plan = kfold_split(10, 2, cfg.seed)
        result = train_fold(ds, plan, 0, cfg)
        init = build_model(cfg.resolver_config(5), seed=result.init_seed)
        for name, p in result.store.params.items():
            np.testing.assert_array_equal(p, init.params[name])
        for name, b in result.store.buffers.items():
            np.testing.assert_array_equal(b, init.buffers[name])
        vals = [v for _, _, _, v in result.curve]
        assert vals[0] == vals[1] == vals[2]
        # identical validation losses tie on every epoch -> earliest wins
        assert result.best_epoch == 0

    def test_fold_id_validated(self):
        ds = make_synthetic_dataset(8, embedding_dim=5, seed=2)
        plan = kfold_split(8, 2, 0)
        with pytest.raises(ValueError):
            train_fold(ds, plan, 2, small_run_config())

    def test_folds_get_distinct_init_seeds(self):
        ds = make_synthetic_dataset(10, embedding_dim=5, seed=2)
        cfg = small_run_config(epochs=1)
        plan = kfold_split(10, 2, cfg.seed)
        r0 = train_fold(ds, plan, 0, cfg)
        r1 = train_fold(ds, plan, 1, cfg)
        assert r0.init_seed != r1.init_seed

    def test_nonfinite_loss_aborts_with_context(self):
        ds = make_synthetic_dataset(8, embedding_dim=5, seed=2)
        prepared = prepare_examples(ds)
        prepared[0].x[0, 0] = np.nan
        plan = kfold_split(8, 2, 0)
        with pytest.raises(RuntimeError, match="non-finite"):
            train_fold(prepared, plan, 0, small_run_config())

    def test_training_is_bitwise_repeatable(self):
        ds = make_synthetic_dataset(10, embedding_dim=5, seed=4)
        cfg = small_run_config(epochs=2)
        plan = kfold_split(10, 2, cfg.seed)
        a = train_fold(ds, plan, 0, cfg)
        b = train_fold(ds, plan, 0, cfg)
        assert a.curve == b.curve
        for name in a.store.params:
            np.testing.assert_array_equal(a.store.params[name],
                                          b.store.params[name])


class TestEnsemble:
    def _models(self, k, seed0=0):
        cfg = small_run_config().resolver_config(5)
        return [(build_model(cfg, seed=seed0 + i), cfg) for i in range(k)]

    def test_identical_models_equal_single_prediction(self):
        ds = make_synthetic_dataset(5, embedding_dim=5, seed=3)
        cfg = small_run_config().resolver_config(5)
        store = build_model(cfg, seed=1)
        single = ensemble_predict([(store, cfg)], ds)
        double = ensemble_predict([(store, cfg), (store.clone(), cfg)], ds)
        np.testing.assert_allclose(single, double, atol=1e-12)

    def test_average_matches_manual_mean(self):
        from gapgcn.model import predict_probs
        ds = make_synthetic_dataset(6, embedding_dim=5, seed=3)
        prepared = prepare_examples(ds)
        models = self._models(3)
        got = ensemble_predict(models, prepared)
        manual = np.mean([predict_probs(s, c, prepared).astype(np.float64)
                          for s, c in models], axis=0)
        np.testing.assert_allclose(got, manual, rtol=0, atol=1e-12)
        np.testing.assert_allclose(got.sum(axis=1), 1.0, atol=1e-12)

    def test_empty_ensemble_rejected(self):
        with pytest.raises(ValueError):
            ensemble_predict([], [])

    def test_mismatched_configs_rejected(self):
        ds = make_synthetic_dataset(4, embedding_dim=5, seed=3)
        cfg_a = small_run_config().resolver_config(5)
        cfg_b = small_run_config(seed=99).resolver_config(5)
        models = [(build_model(cfg_a, 0), cfg_a), (build_model(cfg_b, 0),
                                                   cfg_b)]
        with pytest.raises(ValueError, match="mismatch"):
            ensemble_predict(models, ds)


class TestRunExperiment:
    def test_end_to_end_metrics_and_report(self):
        train = make_synthetic_dataset(12, embedding_dim=5, seed=5)
        test = make_synthetic_dataset(5, embedding_dim=5, seed=6)
        result = run_experiment(train, test, small_run_config())
        assert set(result.metrics) == {"test_log_loss", "test_micro_f1"}
        assert np.isfinite(result.metrics["test_log_loss"])
        assert result.test_probs.shape == (5, 3)
        assert "test_log_loss" in result.report
        assert "[fold 1]" in result.report

    def test_no_test_set(self):
        train = make_synthetic_dataset(10, embedding_dim=5, seed=5)
        result = run_experiment(train, None, small_run_config())
        assert result.metrics == {} and result.test_probs is None
        assert "(no test set)" in result.report

    def test_report_is_reproducible(self):
        train = make_synthetic_dataset(10, embedding_dim=5, seed=7)
        test = make_synthetic_dataset(4, embedding_dim=5, seed=8)
        r1 = run_experiment(train, test, small_run_config())
        r2 = run_experiment(train, test, small_run_config())
        assert r1.report == r2.report
        np.testing.assert_array_equal(r1.test_probs, r2.test_probs)

    def test_mismatched_embedding_widths_rejected(self):
        train = make_synthetic_dataset(10, embedding_dim=5, seed=7)
        test = make_synthetic_dataset(4, embedding_dim=6, seed=8)
        with pytest.raises(ValueError, match="widths"):
            run_experiment(train, test, small_run_config())

    def test_explicit_embedding_dim_must_match_data(self):
        train = make_synthetic_dataset(8, embedding_dim=5, seed=7)
        with pytest.raises(ValueError, match="embedding_dim"):
            run_experiment(train, None,
                           small_run_config(embedding_dim=12))

    def test_worker_pool_matches_sequential(self, monkeypatch):
        train = make_synthetic_dataset(10, embedding_dim=5, seed=9)
        test = make_synthetic_dataset(4, embedding_dim=5, seed=10)
        monkeypatch.delenv("RGCN_THREADS", raising=False)
        seq = run_experiment(train, test, small_run_config())
        monkeypatch.setenv("RGCN_THREADS", "2")
        par = run_experiment(train, test, small_run_config())
        assert par.report == seq.report
        np.testing.assert_array_equal(par.test_probs, seq.test_probs)


def test_small_overfit_drives_training_loss_down():
    # scaled-down memorization check; the acceptance suite runs the full one
    train = make_synthetic_dataset(8, embedding_dim=6, seed=20)
    cfg = small_run_config(epochs=40, folds=2, dropout_p=0.0,
                           l2_lambda=0.0, lr0=5e-3, lr_decay=1.0)
    plan = kfold_split(8, 2, cfg.seed)
    result = train_fold(train, plan, 0, cfg)
    first = result.curve[0][2]
    last = result.curve[-1][2]
    assert last < first * 0.5
