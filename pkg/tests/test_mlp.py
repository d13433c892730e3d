"""Two-layer softmax MLP: forward, backprop, Adam training, persistence."""

import math

import numpy as np
import pytest

from batchal.embeddings import gradient_embedding, PredictionRecord
from batchal.mlp import (
    MlpConfig,
    adam_step,
    forward,
    forward_pool,
    init_params,
    load_params,
    loss_and_grad,
    predict_pool,
    save_params,
    train_from_scratch,
)
from batchal.mlp import test_accuracy as accuracy_on


def small_config(**overrides):
    base = dict(input_dim=3, num_classes=2, hidden_dim=4, rng_seed=0)
    base.update(overrides)
    return MlpConfig(**base)


def zeroed(config):
    params = init_params(config)
    for arr in params.arrays().values():
        arr[:] = 0.0
    return params


class TestConfig:
    def test_rejects_bad_dims(self):
        with pytest.raises(ValueError):
            MlpConfig(input_dim=0, num_classes=2).validate()
        with pytest.raises(ValueError):
            MlpConfig(input_dim=3, num_classes=1).validate()

    def test_rejects_bad_threshold(self):
        with pytest.raises(ValueError):
            MlpConfig(input_dim=3, num_classes=2, train_acc_threshold=0.0).validate()
        with pytest.raises(ValueError):
            MlpConfig(input_dim=3, num_classes=2, train_acc_threshold=1.1).validate()

    def test_with_seed_copies(self):
        cfg = small_config(rng_seed=1)
        assert cfg.with_seed(9).rng_seed == 9
        assert cfg.rng_seed == 1


class TestForward:
    def test_zero_params_give_uniform(self):
        cfg = small_config(num_classes=4)
        p, z = forward(zeroed(cfg), np.array([1.0, -2.0, 3.0]))
        np.testing.assert_allclose(p, np.full(4, 0.25))
        np.testing.assert_array_equal(z, np.zeros(4))

    def test_hand_softmax(self):
        # Rig the output layer to produce logits (ln 3, 0) for a fixed z.
        cfg = small_config()
        params = zeroed(cfg)
        params.b1[:] = 1.0           # z = ReLU(b1) = ones
        params.w2[0, 0] = math.log(3.0)  # logit_0 = ln 3, logit_1 = 0
        p, z = forward(params, np.zeros(3))
        np.testing.assert_allclose(p, [0.75, 0.25])
        np.testing.assert_array_equal(z, np.ones(4))

    def test_probs_normalized_for_random_params(self):
        cfg = small_config(num_classes=5, hidden_dim=16)
        params = init_params(cfg)
        rng = np.random.default_rng(0)
        P, _ = forward(params, rng.standard_normal((40, 3)))
        assert np.all(P > 0.0) and np.all(P < 1.0)
        np.testing.assert_allclose(P.sum(axis=1), np.ones(40), atol=1e-9)

    def test_extreme_logits_stay_finite(self):
        cfg = small_config()
        params = zeroed(cfg)
        params.b1[:] = 500.0
        params.w2[0, :] = 10.0
        p, _ = forward(params, np.zeros(3))
        assert np.all(np.isfinite(p))

    def test_rejects_nonfinite_input(self):
        params = init_params(small_config())
        with pytest.raises(ValueError):
            forward(params, np.array([np.nan, 0.0, 0.0]))

    def test_rejects_wrong_dimension(self):
        params = init_params(small_config())
        with pytest.raises(ValueError):
            forward(params, np.zeros(4))


class TestLossAndGrad:
    def test_uniform_probs_loss_is_log_k(self):
        cfg = small_config(num_classes=3)
        loss, _ = loss_and_grad(zeroed(cfg), np.ones((5, 3)), np.array([0, 1, 2, 0, 1]))
        assert loss == pytest.approx(math.log(3.0))

    def test_loss_nonnegative(self):
        cfg = small_config(num_classes=3, hidden_dim=8)
        params = init_params(cfg)
        rng = np.random.default_rng(1)
        x = rng.standard_normal((20, 3))
        y = rng.integers(0, 3, size=20)
        loss, _ = loss_and_grad(params, x, y)
        assert loss >= 0.0

    def test_output_gradient_matches_embedding_formula(self):
        # For one example the gradient wrt the output weights is exactly the
        # gradient-embedding construction with the true label substituted.
        cfg = small_config(num_classes=3, hidden_dim=5, input_dim=4)
        params = init_params(cfg)
        x = np.array([0.5, -1.0, 2.0, 0.3])
        p, z = forward(params, x)
        y = 2
        _, grads = loss_and_grad(params, x[None, :], np.array([y]))
        coeffs = p.copy()
        coeffs[y] -= 1.0
        np.testing.assert_array_equal(grads["w2"], np.outer(z, coeffs))

    def test_output_gradient_at_hypothetical_label_matches_embedding(self):
        cfg = small_config(num_classes=3, hidden_dim=5, input_dim=4)
        params = init_params(cfg)
        x = np.array([1.5, 0.0, -2.0, 1.0])
        p, z = forward(params, x)
        yhat = int(np.argmax(p))
        _, grads = loss_and_grad(params, x[None, :], np.array([yhat]))
        emb = gradient_embedding(
            PredictionRecord(example_id=0, probs=p, features=z)
        )
        np.testing.assert_array_equal(grads["w2"].T.ravel(), emb.vector)

    def test_labels_out_of_range(self):
        cfg = small_config()
        with pytest.raises(ValueError):
            loss_and_grad(init_params(cfg), np.zeros((1, 3)), np.array([2]))

    def test_gradcheck_against_central_differences(self):
        # 20 random small configurations; relative error measured in the
        # max norm against h = 1e-5 central differences.
        rng = np.random.default_rng(42)
        h = 1e-5
        for trial in range(20):
            d_in = int(rng.integers(2, 9))
            hidden = int(rng.integers(2, 9))
            k = int(rng.integers(2, 5))
            cfg = MlpConfig(input_dim=d_in, num_classes=k, hidden_dim=hidden,
                            rng_seed=int(rng.integers(1 << 30)))
            params = init_params(cfg)
            n = int(rng.integers(1, 6))
            x = rng.standard_normal((n, d_in))
            # Keep every ReLU preactivation away from its kink so the loss
            # is twice differentiable in the probed neighborhood.
            while True:
                pre = x @ params.w1 + params.b1
                if np.abs(pre).min() > 1e-3:
                    break
                x = rng.standard_normal((n, d_in))
            y = rng.integers(0, k, size=n)
            _, grads = loss_and_grad(params, x, y)
            for name, arr in params.arrays().items():
                analytic = grads[name]
                numeric = np.zeros_like(arr)
                flat = arr.ravel()
                num_flat = numeric.ravel()
                for i in range(flat.size):
                    keep = flat[i]
                    flat[i] = keep + h
                    up, _ = loss_and_grad(params, x, y)
                    flat[i] = keep - h
                    down, _ = loss_and_grad(params, x, y)
                    flat[i] = keep
                    num_flat[i] = (up - down) / (2 * h)
                scale = max(1.0, np.abs(analytic).max(), np.abs(numeric).max())
                err = np.abs(analytic - numeric).max() / scale
                assert err <= 1e-6, (trial, name, err)


class TestTraining:
    def test_separable_set_reaches_full_accuracy(self):
        rng = np.random.default_rng(0)
        x = np.concatenate([rng.standard_normal((10, 3)) + 8.0,
                            rng.standard_normal((10, 3)) - 8.0])
        y = np.array([0] * 10 + [1] * 10)
        cfg = small_config(hidden_dim=8, train_acc_threshold=1.0, max_epochs=200)
        result = train_from_scratch(cfg, x, y)
        assert result.reached_threshold
        assert result.final_train_accuracy == 1.0
        assert result.epochs_run < 200

    def test_single_example_memorized(self):
        cfg = small_config()
        result = train_from_scratch(cfg, np.array([[1.0, 2.0, 3.0]]), np.array([1]))
        assert result.final_train_accuracy == 1.0

    def test_single_class_set_is_legal(self):
        rng = np.random.default_rng(3)
        result = train_from_scratch(small_config(), rng.standard_normal((6, 3)), np.zeros(6, dtype=int))
        assert result.final_train_accuracy == 1.0

    def test_bit_identical_trajectories_under_seed(self):
        rng = np.random.default_rng(4)
        x = rng.standard_normal((30, 3))
        y = rng.integers(0, 2, size=30)
        cfg = small_config(max_epochs=5, train_acc_threshold=1.0)
        a = train_from_scratch(cfg, x, y)
        b = train_from_scratch(cfg, x, y)
        for arr_a, arr_b in zip(a.params.arrays(), b.params.arrays()):
            assert np.array_equal(arr_a, arr_b)
        assert a.epochs_run == b.epochs_run

    def test_different_seed_changes_init(self):
        a = init_params(small_config(rng_seed=0))
        b = init_params(small_config(rng_seed=1))
        assert not np.array_equal(a.w1, b.w1)

    def test_init_bounds_follow_fan_in(self):
        cfg = MlpConfig(input_dim=16, num_classes=3, hidden_dim=64, rng_seed=5)
        params = init_params(cfg)
        assert np.abs(params.w1).max() <= 1 / math.sqrt(16)
        assert np.abs(params.w2).max() <= 1 / math.sqrt(64)

    def test_empty_training_set_rejected(self):
        with pytest.raises(ValueError):
            train_from_scratch(small_config(), np.zeros((0, 3)), np.zeros(0, dtype=int))

    def test_adam_step_updates_moments(self):
        cfg = small_config()
        params = init_params(cfg)
        _, grads = loss_and_grad(params, np.ones((2, 3)), np.array([0, 1]))
        before = params.w1.copy()
        adam_step(params, grads, cfg)
        assert params.adam_t == 1
        assert not np.array_equal(params.w1, before)
        assert params.all_finite()


class TestPrediction:
    def test_predict_pool_records(self):
        cfg = small_config(num_classes=3, hidden_dim=6)
        params = init_params(cfg)
        rng = np.random.default_rng(6)
        feats = rng.standard_normal((8, 3))
        records = predict_pool(params, feats, ids=list(range(100, 108)))
        assert [r.example_id for r in records] == list(range(100, 108))
        P, Z = forward_pool(params, feats)
        for i, rec in enumerate(records):
            assert np.array_equal(rec.probs, P[i])
            assert np.array_equal(rec.features, Z[i])

    def test_zero_params_balanced_two_class_accuracy_half(self):
        # Uniform probabilities predict class 0 under the tie rule, which is
        # correct on exactly half of a balanced binary test set.
        cfg = small_config()
        x = np.random.default_rng(7).standard_normal((10, 3))
        y = np.array([0, 1] * 5)
        assert accuracy_on(zeroed(cfg), x, y) == 0.5

    def test_empty_test_set_rejected(self):
        with pytest.raises(ValueError):
            accuracy_on(init_params(small_config()), np.zeros((0, 3)), np.zeros(0, dtype=int))

    def test_memorizer_scores_its_own_training_set(self):
        rng = np.random.default_rng(8)
        x = np.concatenate([rng.standard_normal((8, 3)) + 5.0,
                            rng.standard_normal((8, 3)) - 5.0])
        y = np.array([0] * 8 + [1] * 8)
        cfg = small_config(hidden_dim=8, max_epochs=300)
        result = train_from_scratch(cfg, x, y)
        assert accuracy_on(result.params, x, y) == 1.0


class TestCheckpoint:
    def test_round_trip_is_bit_exact(self, tmp_path):
        cfg = small_config(num_classes=3, hidden_dim=5, rng_seed=77)
        params = init_params(cfg)
        path = tmp_path / "params.bin"
        save_params(path, params)
        loaded = load_params(path)
        for a, b in zip(params.arrays(), loaded.arrays()):
            assert np.array_equal(a, b)
        assert loaded.rng_seed == 77
        assert loaded.input_dim == 3 and loaded.hidden_dim == 5 and loaded.num_classes == 3

    def test_bad_magic_rejected(self, tmp_path):
        path = tmp_path / "junk.bin"
        path.write_bytes(b"NOTMAGIC" + b"\0" * 64)
        with pytest.raises(ValueError):
            load_params(path)

    def test_truncated_file_rejected(self, tmp_path):
        cfg = small_config()
        params = init_params(cfg)
        path = tmp_path / "params.bin"
        save_params(path, params)
        path.write_bytes(path.read_bytes()[:-16])
        with pytest.raises(ValueError):
            load_params(path)
