import numpy as np
import pytest

import recme.train as train_mod
from recme.gradcheck import TINY_SPEC, full_model_gradcheck
from recme.layers import ShapeMismatch
from recme.model import (
    InvalidSpec,
    MissingCache,
    ModelSpec,
    ModelState,
    backward,
    build_model,
    forward,
    init_params,
    new_state,
    param_shapes,
    residual_block,
)

TINY_REGISTRY = ["a", "b", "c"]


def tiny_state(seed=0):
    return ModelState(TINY_SPEC, init_params(TINY_SPEC, seed), list(TINY_REGISTRY))


class TestSpec:
    def test_default_shape_chain(self):
        spec = build_model(4)
        assert spec.input_len == 8000
        assert spec.block_out_len == 500
        assert spec.pooled_len == 166
        assert spec.flat_width == 21248

    def test_final_width_tracks_classes(self):
        assert param_shapes(build_model(4))["output.w"] == (128, 4)
        assert param_shapes(build_model(5))["output.w"] == (128, 5)

    def test_rejects_bad_specs(self):
        with pytest.raises(InvalidSpec):
            build_model(1)
        with pytest.raises(InvalidSpec):
            build_model(3, block_filters=(8, 8, 8))
        with pytest.raises(InvalidSpec):
            build_model(3, dense_sizes=(64,))
        with pytest.raises(InvalidSpec):
            build_model(3, dropout_rate=1.0)
        with pytest.raises(InvalidSpec):
            build_model(3, input_len=16)


class TestInit:
    def test_deterministic(self):
        a = init_params(TINY_SPEC, seed=5)
        b = init_params(TINY_SPEC, seed=5)
        assert all(np.array_equal(a[k], b[k]) for k in a)

    def test_seed_changes_weights(self):
        a = init_params(TINY_SPEC, seed=5)
        b = init_params(TINY_SPEC, seed=6)
        assert not np.array_equal(a["dense1.w"], b["dense1.w"])

    def test_biases_zero(self):
        params = init_params(TINY_SPEC, seed=0)
        for name, tensor in params.items():
            if name.endswith(".b"):
                assert not tensor.any()

    def test_he_uniform_variance(self):
        spec = build_model(4)
        params = init_params(spec, seed=0)
        w = params["dense1.w"]  # 21248 x 256, plenty of samples
        bound = np.sqrt(6.0 / spec.flat_width)
        expected_var = bound**2 / 3.0
        assert abs(w.var() - expected_var) / expected_var < 0.05
        assert np.abs(w).max() <= bound


class TestResidualBlock:
    def test_all_zero_weights(self):
        x = np.random.default_rng(0).normal(size=(2, 8, 2))
        out, _ = residual_block(
            x,
            np.zeros((3, 2, 3)), np.zeros(3),
            np.zeros((3, 3, 3)), np.zeros(3),
            np.zeros((1, 2, 3)), np.zeros(3),
        )
        assert out.shape == (2, 4, 3)
        assert not out.any()

    def test_shortcut_passthrough(self):
        rng = np.random.default_rng(1)
        x = rng.normal(size=(1, 6, 1))
        out, _ = residual_block(
            x,
            np.zeros((3, 1, 1)), np.zeros(1),
            np.zeros((3, 1, 1)), np.zeros(1),
            np.ones((1, 1, 1)), np.zeros(1),
        )
        relud = np.maximum(x, 0.0)
        pooled = np.maximum(relud[:, 0::2, :], relud[:, 1::2, :])
        assert out == pytest.approx(pooled)

    def test_matches_layer_composition(self, rng):
        from recme.layers import conv1d, maxpool1d, relu

        x = rng.normal(size=(2, 8, 2))
        w1, b1 = rng.normal(size=(3, 2, 3)), rng.normal(size=3)
        w2, b2 = rng.normal(size=(3, 3, 3)), rng.normal(size=3)
        ws, bs = rng.normal(size=(1, 2, 3)), rng.normal(size=3)
        out, _ = residual_block(x, w1, b1, w2, b2, ws, bs)
        main = conv1d(relu(conv1d(x, w1, b1)), w2, b2)
        expected, _ = maxpool1d(relu(main + conv1d(x, ws, bs)))
        assert out == pytest.approx(expected, abs=1e-12)


class TestForward:
    def test_rows_sum_to_one(self, rng):
        state = tiny_state()
        probs, cache = forward(state, rng.normal(size=(4, 64, 1)), mode="infer")
        assert cache is None
        assert probs.sum(axis=1) == pytest.approx(np.ones(4), abs=1e-9)

    def test_identical_items_identical_rows(self, rng):
        state = tiny_state()
        item = rng.normal(size=(64, 1))
        probs, _ = forward(state, np.stack([item, item]), mode="infer")
        assert np.array_equal(probs[0], probs[1])

    def test_batching_consistency(self, rng):
        state = tiny_state()
        batch = rng.normal(size=(2, 64, 1))
        together, _ = forward(state, batch, mode="infer")
        one, _ = forward(state, batch[:1], mode="infer")
        two, _ = forward(state, batch[1:], mode="infer")
        assert np.max(np.abs(together - np.vstack([one, two]))) <= 1e-12

    def test_train_mode_returns_cache(self, rng):
        state = tiny_state()
        probs, cache = forward(state, rng.normal(size=(2, 64, 1)), mode="train",
                               rng=np.random.default_rng(0))
        assert cache is not None and cache.training
        assert cache.probs is not None and cache.logits is not None

    def test_wrong_width_rejected(self, rng):
        with pytest.raises(ShapeMismatch):
            forward(tiny_state(), rng.normal(size=(1, 63, 1)))

    def test_deterministic_with_seed(self, rng):
        state = tiny_state()
        spec = ModelSpec(num_classes=3, input_len=64, block_filters=(2, 3, 4, 4),
                         dense_sizes=(8, 4), dropout_rate=0.3)
        state = ModelState(spec, init_params(spec, 0), TINY_REGISTRY)
        batch = rng.normal(size=(2, 64, 1))
        a, _ = forward(state, batch, mode="train", rng=np.random.default_rng(7))
        b, _ = forward(state, batch, mode="train", rng=np.random.default_rng(7))
        assert np.array_equal(a, b)


class TestBackward:
    def test_full_model_gradcheck(self):
        report = full_model_gradcheck()
        assert report["passed"], report
        assert report["max_rel_err"] <= 1e-4

    def test_requires_train_cache(self, rng):
        state = tiny_state()
        _, cache = forward(state, rng.normal(size=(1, 64, 1)), mode="infer")
        with pytest.raises(MissingCache):
            backward(state, cache, [0])

    def test_dead_relu_zeroes_gradient(self, rng):
        state = tiny_state()
        # a hugely negative conv1 bias suffocates block1's main path, so
        # nothing downstream depends on its kernel
        state.params["block1.conv1.b"] -= 1e6
        batch = rng.normal(size=(2, 64, 1))
        _, cache = forward(state, batch, mode="train")
        grads = backward(state, cache, [0, 1])
        assert not grads["block1.conv1.w"].any()
        assert grads["block1.shortcut.w"].any()  # shortcut still learns

    def test_duplicated_batch_keeps_mean_gradient(self, rng):
        state = tiny_state()
        batch = rng.normal(size=(2, 64, 1))
        labels = [0, 2]
        _, cache1 = forward(state, batch, mode="train")
        grads1 = backward(state, cache1, labels)
        doubled = np.concatenate([batch, batch])
        _, cache2 = forward(state, doubled, mode="train")
        grads2 = backward(state, cache2, labels + labels)
        for name in grads1:
            assert np.max(np.abs(grads1[name] - grads2[name])) <= 1e-12

    def test_gradient_mass_reaches_both_branches(self, rng):
        state = tiny_state()
        batch = rng.normal(size=(2, 64, 1))
        _, cache = forward(state, batch, mode="train")
        grads = backward(state, cache, [0, 1])
        for name, tensor in grads.items():
            assert tensor.shape == state.params[name].shape
            assert np.isfinite(tensor).all()


class TestStateContainer:
    def test_registry_size_enforced(self):
        with pytest.raises(InvalidSpec):
            ModelState(TINY_SPEC, init_params(TINY_SPEC, 0), ["only", "two"])

    def test_new_state_roundtrip(self):
        state = new_state(["x", "y"], seed=3, input_len=64,
                          block_filters=(2, 2, 2, 2), dense_sizes=(4, 4))
        assert state.spec.num_classes == 2
        assert state.registry == ["x", "y"]

    def test_copy_is_deep_for_params(self):
        state = tiny_state()
        clone = state.copy()
        clone.params["dense1.b"] += 1.0
        assert not state.params["dense1.b"].any()
