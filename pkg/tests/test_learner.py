"""Model init, the pairwise ranking loss, training behavior, inference
helpers and the checkpoint format."""

import dataclasses

import numpy as np
import pytest

from allab.data import Dataset, generate_gaussian_mixture
from allab.errors import (
    InvalidParameterError,
    LossHeadMissingError,
    NonFiniteLossError,
    OddBatchError,
    ParseError,
)
from allab.learner import (
    LearnerConfig,
    _batch_loss_and_grads,
    embed,
    init_model,
    llal_pair_loss,
    load_checkpoint,
    predict_loss,
    predict_proba,
    predict_proba_features,
    predict_proba_mc,
    save_checkpoint,
    train,
)


def _small_ds(n_per_class=20, num_classes=3, dim=4, sep=4.0, seed=0):
    return generate_gaussian_mixture(
        num_classes=num_classes, dim=dim, n_per_class=n_per_class,
        class_sep=sep, seed=seed)


def _params_equal(a, b):
    pa, pb = a.parameter_arrays(), b.parameter_arrays()
    return len(pa) == len(pb) and all(np.array_equal(x, y)
                                      for x, y in zip(pa, pb))


class TestInit:
    def test_shapes(self):
        cfg = LearnerConfig(hidden_sizes=(8, 5), seed=1)
        m = init_model(cfg, dim=4, num_classes=3)
        assert [w.shape for w in m.weights] == [(4, 8), (8, 5), (5, 3)]
        assert [b.shape for b in m.biases] == [(8,), (5,), (3,)]
        assert not m.has_loss_head
        assert m.embed_dim == 5

    def test_no_hidden_layers(self):
        m = init_model(LearnerConfig(hidden_sizes=()), dim=6, num_classes=2)
        assert [w.shape for w in m.weights] == [(6, 2)]
        assert m.embed_dim == 6

    def test_deterministic_in_seed(self):
        cfg = LearnerConfig(hidden_sizes=(7,), seed=42, loss_head=True)
        a = init_model(cfg, 5, 4)
        b = init_model(cfg, 5, 4)
        assert _params_equal(a, b)
        c = init_model(dataclasses.replace(cfg, seed=43), 5, 4)
        assert not _params_equal(a, c)

    def test_scaled_uniform_bounds(self):
        cfg = LearnerConfig(hidden_sizes=(64,), seed=5)
        m = init_model(cfg, dim=100, num_classes=10)
        # every layer draws within +-1/sqrt(fan_in)
        for w, fan_in in zip(m.weights, [100, 64]):
            bound = 1.0 / np.sqrt(fan_in)
            assert np.abs(w).max() <= bound
            assert np.abs(w).max() > 0.8 * bound  # draws fill the range
        assert np.abs(m.biases[0]).max() <= 1.0 / 10.0

    def test_loss_head_arrays(self):
        cfg = LearnerConfig(hidden_sizes=(8, 6), loss_head=True,
                            llal_interm=4, seed=2)
        m = init_model(cfg, 5, 3)
        assert m.has_loss_head
        assert [w.shape for w in m.head_w1] == [(8, 4), (6, 4)]
        assert m.head_w2.shape == (8, 1)  # 2 taps x interm 4

    def test_bad_dims_rejected(self):
        with pytest.raises(InvalidParameterError):
            init_model(LearnerConfig(), dim=0, num_classes=3)
        with pytest.raises(InvalidParameterError):
            init_model(LearnerConfig(), dim=4, num_classes=1)

    def test_config_validation(self):
        with pytest.raises(InvalidParameterError):
            LearnerConfig(lr=-0.1)
        with pytest.raises(InvalidParameterError):
            LearnerConfig(momentum=1.0)
        with pytest.raises(InvalidParameterError):
            LearnerConfig(dropout_p=1.0)
        with pytest.raises(InvalidParameterError):
            LearnerConfig(loss_head=True, batch_size=63)

    def test_detach_epoch_default(self):
        assert LearnerConfig(epochs=200).detach_epoch == 120
        assert LearnerConfig(epochs=200, llal_detach_epoch=7).detach_epoch == 7


class TestPairLoss:
    def test_correct_order_beyond_margin_is_zero(self):
        # true losses say sample 0 > sample 1; prediction agrees by 1.3 >= 1
        assert llal_pair_loss([2.0, 1.0], [1.5, 0.2], margin=1.0) == 0.0

    def test_wrong_order_pays_gap_plus_margin(self):
        assert llal_pair_loss([2.0, 1.0], [0.2, 1.5], margin=1.0) == \
            pytest.approx(2.3, abs=1e-12)

    def test_tied_prediction_pays_margin(self):
        assert llal_pair_loss([2.0, 1.0], [0.5, 0.5], margin=1.0) == \
            pytest.approx(1.0, abs=1e-12)

    def test_mean_over_pairs(self):
        # pairs are (i, i + n/2): here (0,2) misordered pays 2.3, (1,3) ok
        got = llal_pair_loss([2.0, 3.0, 1.0, 4.0],
                             [0.2, 0.1, 1.5, 1.2], margin=1.0)
        assert got == pytest.approx(2.3 / 2, abs=1e-12)

    def test_odd_or_empty_batch_rejected(self):
        with pytest.raises(OddBatchError):
            llal_pair_loss([1.0, 2.0, 3.0], [0.1, 0.2, 0.3], margin=1.0)
        with pytest.raises(OddBatchError):
            llal_pair_loss([], [], margin=1.0)

    def test_length_mismatch_rejected(self):
        with pytest.raises(InvalidParameterError):
            llal_pair_loss([1.0, 2.0], [0.1], margin=1.0)


class TestDetach:
    def test_detached_head_leaves_trunk_gradients_at_ce_only(self):
        cfg = LearnerConfig(hidden_sizes=(6,), dropout_p=0.0, loss_head=True,
                            batch_size=4, llal_weight=1.0, seed=3)
        model = init_model(cfg, 5, 3)
        rng = np.random.default_rng(0)
        x = rng.standard_normal((4, 5))
        y = rng.integers(0, 3, 4)

        _, g_det = _batch_loss_and_grads(model, x, y, None, cfg, True)
        _, g_flow = _batch_loss_and_grads(model, x, y, None, cfg, False)
        plain = dataclasses.replace(cfg, llal_weight=0.0)
        _, g_ce = _batch_loss_and_grads(model, x, y, None, plain, True)

        for gd, gc in zip(g_det.w, g_ce.w):
            assert np.array_equal(gd, gc)
        assert any(not np.array_equal(gf, gd)
                   for gf, gd in zip(g_flow.w, g_det.w))
        # the head itself still learns while detached
        assert any(np.abs(a).max() > 0 for a in g_det.hw1)


class TestTraining:
    def test_overfits_small_separable_batch(self):
        ds = _small_ds(n_per_class=8, sep=5.0)
        cfg = LearnerConfig(hidden_sizes=(16,), dropout_p=0.0, epochs=300,
                            batch_size=24, lr=0.2, weight_decay=0.0,
                            lr_step_epoch=250, seed=7)
        model = train(init_model(cfg, ds.dim, ds.num_classes), ds,
                      np.arange(ds.n_samples), cfg)
        assert model.loss_history[-1] < 1e-3

    def test_bitwise_deterministic_with_dropout(self):
        ds = _small_ds()
        cfg = LearnerConfig(hidden_sizes=(10,), dropout_p=0.3, epochs=5,
                            batch_size=16, seed=9)
        runs = []
        for _ in range(2):
            m = train(init_model(cfg, ds.dim, ds.num_classes), ds,
                      np.arange(ds.n_samples), cfg)
            runs.append(m)
        assert _params_equal(*runs)
        assert runs[0].loss_history == runs[1].loss_history

    def test_epoch_accounting_accumulates(self):
        ds = _small_ds()
        cfg = LearnerConfig(hidden_sizes=(4,), epochs=3, seed=1)
        m = init_model(cfg, ds.dim, ds.num_classes)
        train(m, ds, np.arange(30), cfg)
        assert m.epochs_trained == 3 and len(m.loss_history) == 3
        train(m, ds, np.arange(30), cfg)
        assert m.epochs_trained == 6 and len(m.loss_history) == 6

    def test_lr_schedule_follows_lifetime_epochs(self):
        # step factor 0 turns the schedule step into a hard freeze, which
        # makes the lifetime-counter semantics directly observable
        ds = _small_ds()
        cfg = LearnerConfig(hidden_sizes=(4,), dropout_p=0.0, epochs=1,
                            batch_size=16, lr=0.1, lr_step_epoch=1,
                            lr_step_factor=0.0, seed=3)
        m = init_model(cfg, ds.dim, ds.num_classes)
        before = [w.copy() for w in m.weights]
        train(m, ds, np.arange(30), cfg)
        assert not np.array_equal(m.weights[0], before[0])
        snap = [w.copy() for w in m.weights]
        train(m, ds, np.arange(30), cfg)  # epochs_trained 1 >= step 1
        assert all(np.array_equal(w, s) for w, s in zip(m.weights, snap))

    def test_zero_lr_never_moves_weights(self):
        ds = _small_ds()
        cfg = LearnerConfig(hidden_sizes=(4,), epochs=2, lr=0.0, seed=2)
        m = init_model(cfg, ds.dim, ds.num_classes)
        before = [w.copy() for w in m.weights]
        train(m, ds, np.arange(20), cfg)
        assert all(np.array_equal(w, s) for w, s in zip(m.weights, before))
        assert m.epochs_trained == 2  # accounting still advances

    def test_divergence_raises(self):
        ds = _small_ds()
        cfg = LearnerConfig(hidden_sizes=(8,), dropout_p=0.0, epochs=50,
                            lr=1e6, weight_decay=0.0, seed=4)
        with pytest.raises(NonFiniteLossError):
            train(init_model(cfg, ds.dim, ds.num_classes), ds,
                  np.arange(ds.n_samples), cfg)

    def test_empty_labeled_rejected(self):
        ds = _small_ds()
        cfg = LearnerConfig()
        with pytest.raises(InvalidParameterError):
            train(init_model(cfg, ds.dim, ds.num_classes), ds, [], cfg)

    def test_architecture_mismatch_rejected(self):
        ds = _small_ds()
        m = init_model(LearnerConfig(hidden_sizes=(4,)), ds.dim,
                       ds.num_classes)
        with pytest.raises(InvalidParameterError):
            train(m, ds, np.arange(10), LearnerConfig(hidden_sizes=(5,)))

    def test_head_config_without_head_model_rejected(self):
        ds = _small_ds()
        cfg = LearnerConfig(hidden_sizes=(4,))
        m = init_model(cfg, ds.dim, ds.num_classes)
        with pytest.raises(LossHeadMissingError):
            train(m, ds, np.arange(10),
                  dataclasses.replace(cfg, loss_head=True))


class TestInference:
    def test_proba_rows_stochastic(self):
        ds = _small_ds()
        m = init_model(LearnerConfig(hidden_sizes=(6,), seed=1), ds.dim,
                       ds.num_classes)
        p = predict_proba(m, ds, np.arange(10))
        assert p.shape == (10, ds.num_classes)
        np.testing.assert_allclose(p.sum(axis=1), 1.0, atol=1e-12)
        assert (p > 0).all()

    def test_proba_ignores_dropout(self):
        ds = _small_ds()
        m = init_model(LearnerConfig(hidden_sizes=(6,), dropout_p=0.5,
                                     seed=1), ds.dim, ds.num_classes)
        a = predict_proba(m, ds, np.arange(5))
        b = predict_proba(m, ds, np.arange(5))
        assert np.array_equal(a, b)

    def test_proba_features_validates_shape(self):
        m = init_model(LearnerConfig(hidden_sizes=(4,)), 6, 3)
        with pytest.raises(InvalidParameterError):
            predict_proba_features(m, np.zeros((5, 7)))
        with pytest.raises(InvalidParameterError):
            predict_proba_features(m, np.zeros(6))
        p = predict_proba_features(m, np.zeros((2, 6)))
        assert p.shape == (2, 3)

    def test_mc_passes_seeded_and_distinct(self):
        ds = _small_ds()
        m = init_model(LearnerConfig(hidden_sizes=(12,), dropout_p=0.4,
                                     seed=8), ds.dim, ds.num_classes)
        a = predict_proba_mc(m, ds, np.arange(6), passes=4, seed=123)
        b = predict_proba_mc(m, ds, np.arange(6), passes=4, seed=123)
        assert a.shape == (4, 6, ds.num_classes)
        assert np.array_equal(a, b)
        assert not np.array_equal(a[0], a[1])  # masks differ across passes
        c = predict_proba_mc(m, ds, np.arange(6), passes=4, seed=124)
        assert not np.array_equal(a, c)

    def test_mc_requires_dropout_and_passes(self):
        ds = _small_ds()
        m0 = init_model(LearnerConfig(hidden_sizes=(4,), dropout_p=0.0),
                        ds.dim, ds.num_classes)
        with pytest.raises(InvalidParameterError):
            predict_proba_mc(m0, ds, np.arange(3), passes=2, seed=0)
        m1 = init_model(LearnerConfig(hidden_sizes=(4,), dropout_p=0.2),
                        ds.dim, ds.num_classes)
        with pytest.raises(InvalidParameterError):
            predict_proba_mc(m1, ds, np.arange(3), passes=0, seed=0)

    def test_embed_shapes(self):
        ds = _small_ds()
        m = init_model(LearnerConfig(hidden_sizes=(9, 7)), ds.dim,
                       ds.num_classes)
        assert embed(m, ds, np.arange(5)).shape == (5, 7)
        flat = init_model(LearnerConfig(hidden_sizes=()), ds.dim,
                          ds.num_classes)
        e = embed(flat, ds, np.arange(5))
        assert np.array_equal(e, ds.features[:5])

    def test_predict_loss_requires_head(self):
        ds = _small_ds()
        m = init_model(LearnerConfig(hidden_sizes=(4,)), ds.dim,
                       ds.num_classes)
        with pytest.raises(LossHeadMissingError):
            predict_loss(m, ds, np.arange(3))

    def test_predicted_losses_track_true_losses_after_training(self):
        ds = _small_ds(n_per_class=40, sep=2.0, seed=3)
        cfg = LearnerConfig(hidden_sizes=(16,), dropout_p=0.0, epochs=150,
                            batch_size=24, lr=0.1, lr_step_epoch=120,
                            loss_head=True, llal_interm=8, seed=5)
        m = train(init_model(cfg, ds.dim, ds.num_classes), ds,
                  np.arange(ds.n_samples), cfg)
        idx = np.arange(ds.n_samples)
        lhat = predict_loss(m, ds, idx)
        assert lhat.shape == (ds.n_samples,) and np.isfinite(lhat).all()
        probs = predict_proba(m, ds, idx)
        true_ce = -np.log(probs[idx, ds.labels[idx]])
        # head output orders pairs like the true loss more often than chance
        half = ds.n_samples // 2
        agree = np.sign(lhat[:half] - lhat[half:2 * half]) == \
            np.sign(true_ce[:half] - true_ce[half:2 * half])
        assert agree.mean() > 0.6


class TestCheckpoint:
    def _model(self, loss_head=True):
        cfg = LearnerConfig(hidden_sizes=(6, 4), dropout_p=0.25,
                            loss_head=loss_head, llal_interm=3, epochs=2,
                            batch_size=16, seed=21)
        ds = _small_ds()
        m = init_model(cfg, ds.dim, ds.num_classes)
        train(m, ds, np.arange(30), cfg)
        return m, cfg, ds

    def test_round_trip(self, tmp_path):
        for loss_head in (True, False):
            m, _, _ = self._model(loss_head)
            path = str(tmp_path / f"m{int(loss_head)}.ckpt")
            save_checkpoint(m, path)
            r = load_checkpoint(path)
            assert _params_equal(m, r)
            assert (r.dim, r.num_classes, r.hidden_sizes) == \
                (m.dim, m.num_classes, m.hidden_sizes)
            assert r.dropout_p == m.dropout_p
            assert r.llal_interm == m.llal_interm
            assert r.epochs_trained == m.epochs_trained
            assert r.seed == m.seed
            assert r.has_loss_head == loss_head

    def test_loaded_models_retrain_identically(self, tmp_path):
        m, cfg, ds = self._model()
        path = str(tmp_path / "m.ckpt")
        save_checkpoint(m, path)
        a, b = load_checkpoint(path), load_checkpoint(path)
        train(a, ds, np.arange(30), cfg)
        train(b, ds, np.arange(30), cfg)
        assert _params_equal(a, b)

    def test_corrupt_magic(self, tmp_path):
        m, _, _ = self._model()
        path = str(tmp_path / "m.ckpt")
        save_checkpoint(m, path)
        blob = bytearray(open(path, "rb").read())
        blob[:4] = b"XXXX"
        open(path, "wb").write(bytes(blob))
        with pytest.raises(ParseError):
            load_checkpoint(path)

    def test_truncated(self, tmp_path):
        m, _, _ = self._model()
        path = str(tmp_path / "m.ckpt")
        save_checkpoint(m, path)
        blob = open(path, "rb").read()
        open(path, "wb").write(blob[:len(blob) // 2])
        with pytest.raises(ParseError):
            load_checkpoint(path)

    def test_trailing_bytes(self, tmp_path):
        m, _, _ = self._model()
        path = str(tmp_path / "m.ckpt")
        save_checkpoint(m, path)
        with open(path, "ab") as fh:
            fh.write(b"\x00" * 8)
        with pytest.raises(ParseError):
            load_checkpoint(path)

    def test_unsupported_version(self, tmp_path):
        m, _, _ = self._model()
        path = str(tmp_path / "m.ckpt")
        save_checkpoint(m, path)
        blob = bytearray(open(path, "rb").read())
        blob[4] = 99
        open(path, "wb").write(bytes(blob))
        with pytest.raises(ParseError):
            load_checkpoint(path)
