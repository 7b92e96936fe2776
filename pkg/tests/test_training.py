import numpy as np
import pytest

from conftest import synthetic_dataset
from lusnet import ops
from lusnet.dataset import build_manifest, split_manifest
from lusnet.errors import ManifestError, ShapeError
from lusnet.network import init_params
from lusnet.tensor import tensor
from lusnet.training import (
    TrainConfig,
    backward,
    cross_entropy,
    evaluate,
    fit_arrays,
    grad_check,
    metrics_from_confusion,
    sgd_step,
    train,
    zero_velocity,
)
from lusnet.weights_io import WeightStore


class TestCrossEntropy:
    def test_perfect_prediction(self):
        assert cross_entropy(tensor([1.0, 0.0]), 0) == 0.0

    def test_uniform(self):
        assert abs(cross_entropy(tensor([0.5, 0.5]), 1) - np.log(2.0)) < 1e-6

    def test_quarter(self):
        assert abs(cross_entropy(tensor([0.25, 0.75]), 0) - np.log(4.0)) < 1e-6

    def test_clamp_keeps_loss_finite(self):
        loss = cross_entropy(tensor([0.0, 1.0]), 0)
        assert np.isfinite(loss)
        assert abs(loss - -np.log(1e-12)) < 1e-6

    def test_nonnegative(self):
        rng = np.random.default_rng(0)
        for _ in range(50):
            p = rng.dirichlet([1.0, 1.0]).astype(np.float32)
            assert cross_entropy(p, int(rng.integers(0, 2))) >= 0.0

    def test_rejects_bad_index(self):
        with pytest.raises(ShapeError):
            cross_entropy(tensor([0.5, 0.5]), 2)


class TestBackward:
    def test_balanced_equal_logits_zero_head_bias_gradient(self, small_spec):
        store = WeightStore()
        store.add("conv0_0/kernels", np.zeros((3, 3, 1, 4), np.float32))
        store.add("conv0_0/bias", np.zeros(4, np.float32))
        store.add("dense3_0/weights", np.zeros((64, 2), np.float32))
        store.add("dense3_0/bias", np.zeros(2, np.float32))
        rng = np.random.default_rng(1)
        images = [rng.random((8, 8, 1), dtype=np.float32) for _ in range(4)]
        _, grads = backward(small_spec, store, images, [0, 1, 0, 1])
        np.testing.assert_allclose(grads["dense3_0/bias"], 0.0, atol=1e-8)

    def test_frozen_layer_gradients_still_computed(self, small_spec, small_store):
        rng = np.random.default_rng(2)
        _, grads = backward(
            small_spec, small_store, [rng.random((8, 8, 1), dtype=np.float32)], [0]
        )
        assert "conv0_0/kernels" in grads
        assert "conv0_0/bias" in grads
        assert set(grads) == set(small_store.names())

    def test_gradient_dims_mirror_store(self, small_spec, small_store):
        rng = np.random.default_rng(3)
        _, grads = backward(
            small_spec, small_store, [rng.random((8, 8, 1), dtype=np.float32)], [1]
        )
        for name, value in small_store.items():
            assert grads[name].shape == value.shape

    def test_rejects_empty_batch(self, small_spec, small_store):
        with pytest.raises(ShapeError):
            backward(small_spec, small_store, [], [])


class TestGradCheck:
    def test_small_spec_across_seeds(self, small_spec):
        for seed in range(5):
            store = init_params(small_spec, seed)
            assert grad_check(small_spec, store, seed=seed) < 1e-5

    def test_seed_seven(self, small_spec):
        store = init_params(small_spec, 7)
        assert grad_check(small_spec, store, seed=7) < 1e-5

    def test_corrupted_conv_backward_detected(self, small_spec, monkeypatch):
        real = ops.conv2d_backward

        def flipped(x, params, dout):
            dx, dk, db = real(x, params, dout)
            return dx, -dk, db

        monkeypatch.setattr(ops, "conv2d_backward", flipped)
        store = init_params(small_spec, 3)
        assert grad_check(small_spec, store, seed=3) > 0.1

    def test_zero_weights_zero_image_zero_error(self, small_spec):
        store = WeightStore()
        store.add("conv0_0/kernels", np.zeros((3, 3, 1, 4), np.float32))
        store.add("conv0_0/bias", np.zeros(4, np.float32))
        store.add("dense3_0/weights", np.zeros((64, 2), np.float32))
        store.add("dense3_0/bias", np.zeros(2, np.float32))
        sample = (np.zeros((8, 8, 1), np.float32), 0)
        assert grad_check(small_spec, store, sample=sample) < 1e-9


class TestSgdStep:
    def _store(self, w0):
        store = WeightStore()
        store.add("dense0_0/weights", np.full((2, 2), w0, np.float32))
        store.add("dense0_0/bias", np.zeros(2, np.float32))
        return store

    def test_plain_gradient_step_to_zero(self):
        store = self._store(0.5)
        grads = {n: store[n].copy() for n in store.names()}
        velocity = zero_velocity(store)
        config = TrainConfig(epochs=1, learning_rate=1.0, momentum=0.0)
        sgd_step(store, grads, velocity, config)
        assert not store["dense0_0/weights"].any()

    def test_full_freeze_is_noop(self):
        store = self._store(0.5)
        snapshot = store.copy()
        grads = {n: np.ones_like(store[n]) for n in store.names()}
        velocity = zero_velocity(store)
        config = TrainConfig(epochs=1)
        sgd_step(store, grads, velocity, config, freeze_mask=set(store.names()))
        assert store.same_bits(snapshot)
        assert not any(velocity[n].any() for n in velocity)

    def test_two_momentum_steps_frozen_values(self):
        # v1 = -0.1, v2 = 0.9*(-0.1) - 0.1 = -0.19, w = w0 - 0.29
        store = self._store(1.0)
        grads = {n: np.ones_like(store[n]) for n in store.names()}
        velocity = zero_velocity(store)
        config = TrainConfig(epochs=1, learning_rate=0.1, momentum=0.9)
        sgd_step(store, grads, velocity, config)
        sgd_step(store, grads, velocity, config)
        np.testing.assert_allclose(velocity["dense0_0/weights"], -0.19, atol=1e-7)
        np.testing.assert_allclose(store["dense0_0/weights"], 1.0 - 0.29, atol=1e-7)

    def test_rejects_name_mismatch(self):
        store = self._store(1.0)
        config = TrainConfig(epochs=1)
        with pytest.raises(ShapeError):
            sgd_step(store, {}, zero_velocity(store), config)


def _toy_arrays(n_per_class=10, size=8, seed=0):
    rng = np.random.default_rng(seed)
    images, labels = [], []
    for label, base in ((0, 0.15), (1, 0.85)):
        for _ in range(n_per_class):
            img = np.clip(
                base + rng.normal(0, 0.1, size=(size, size, 1)), 0.0, 1.0
            ).astype(np.float32)
            images.append(img)
            labels.append(label)
    return images, labels


class TestFitArrays:
    def test_overfits_separable_toy_set(self, small_spec):
        images, labels = _toy_arrays()
        store = init_params(small_spec, 0)
        config = TrainConfig(epochs=40, learning_rate=0.05, batch_size=4, seed=0)
        history = fit_arrays(small_spec, store, (images, labels), None, config)
        assert history[-1]["train_acc"] == 1.0
        assert len(history) == 40

    def test_deterministic_given_seed(self, small_spec):
        images, labels = _toy_arrays()
        config = TrainConfig(epochs=3, seed=5)
        store_a = init_params(small_spec, 5)
        fit_arrays(small_spec, store_a, (images, labels), None, config)
        store_b = init_params(small_spec, 5)
        fit_arrays(small_spec, store_b, (images, labels), None, config)
        assert store_a.same_bits(store_b)

    def test_zero_epochs_is_noop(self, small_spec, small_store):
        images, labels = _toy_arrays(2)
        snapshot = small_store.copy()
        history = fit_arrays(
            small_spec, small_store, (images, labels), None, TrainConfig(epochs=0)
        )
        assert history == []
        assert small_store.same_bits(snapshot)

    def test_transfer_mode_freezes_conv_tensors(self, small_spec):
        images, labels = _toy_arrays()
        store = init_params(small_spec, 1)
        conv_before = {
            n: store[n].copy() for n in store.names() if n.startswith("conv")
        }
        config = TrainConfig(epochs=5, transfer_mode=True, seed=1)
        fit_arrays(small_spec, store, (images, labels), None, config)
        for name, before in conv_before.items():
            assert store[name].tobytes() == before.tobytes()
        # the dense head did move
        assert store["dense3_0/weights"].any()


class TestManifestTraining:
    def test_train_and_evaluate_via_manifest(self, small_spec, tmp_path):
        root = synthetic_dataset(tmp_path / "data", n_per_class=10)
        manifest = split_manifest(build_manifest(root), seed=0)
        store = init_params(small_spec, 0)
        config = TrainConfig(epochs=30, learning_rate=0.05, batch_size=4, seed=0)
        _, history = train(small_spec, store, manifest, config, data_root=root)
        assert history[-1]["train_acc"] == 1.0
        assert all(set(row) == {"epoch", "train_loss", "train_acc", "val_acc"} for row in history)
        metrics = evaluate(small_spec, store, manifest, "val", data_root=root)
        assert metrics.accuracy == 1.0

    def test_train_requires_nonempty_splits(self, small_spec, small_store, tmp_path):
        root = synthetic_dataset(tmp_path / "data", n_per_class=2)
        manifest = build_manifest(root)  # no split assigned
        with pytest.raises(ManifestError):
            train(small_spec, small_store, manifest, TrainConfig(epochs=1), data_root=root)


class TestMetrics:
    def test_perfect_classifier(self):
        m = metrics_from_confusion([[10, 0], [0, 10]])
        assert m.accuracy == m.sensitivity == m.specificity == 1.0

    def test_always_covid(self):
        m = metrics_from_confusion([[10, 0], [10, 0]])
        assert m.sensitivity == 1.0
        assert m.specificity == 0.0
        assert m.accuracy == 0.5

    def test_hand_confusion(self):
        m = metrics_from_confusion([[8, 2], [1, 9]])
        assert abs(m.sensitivity - 0.8) < 1e-12
        assert abs(m.specificity - 0.9) < 1e-12
        assert abs(m.accuracy - 0.85) < 1e-12

    def test_counts_sum_preserved(self):
        m = metrics_from_confusion([[3, 4], [5, 6]])
        assert sum(sum(row) for row in m.confusion) == 18
