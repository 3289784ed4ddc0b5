"""Tests for the dense network engine: forward, backward, SGD, checkpoints."""

import numpy as np
import pytest

from mi_embed import nn
from mi_embed.exceptions import (
    CacheMismatchError,
    CheckpointError,
    DimensionMismatchError,
    TrainingDivergedError,
)


def identity_net(dim):
    eye = np.eye(dim)
    zero = np.zeros(dim)
    return nn.DenseNet((dim, dim), ("identity",), (eye,), (zero,))


def straight_line_forward(net, x):
    # independently coded evaluation used as a forward oracle
    a = np.array(x, dtype=float)
    for w, b, act in zip(net.weights, net.biases, net.activations):
        a = w @ a + b
        if act == "relu":
            a = np.where(a > 0, a, 0.0)
    return a


def finite_difference_grads(net, X, loss_fn, h=1e-5):
    """Central finite differences of loss_fn(forward_batch(net, X))."""

    def loss_at(weights, biases):
        perturbed = nn.DenseNet(net.layer_dims, net.activations, weights, biases)
        return loss_fn(nn.forward_batch(perturbed, X))

    grad_w = []
    grad_b = []
    for k in range(net.n_layers):
        gw = np.zeros_like(net.weights[k])
        for idx in np.ndindex(gw.shape):
            wp = [np.array(w) for w in net.weights]
            wm = [np.array(w) for w in net.weights]
            wp[k][idx] += h
            wm[k][idx] -= h
            gw[idx] = (
                loss_at(tuple(wp), net.biases) - loss_at(tuple(wm), net.biases)
            ) / (2 * h)
        grad_w.append(gw)
        gb = np.zeros_like(net.biases[k])
        for idx in np.ndindex(gb.shape):
            bp = [np.array(b) for b in net.biases]
            bm = [np.array(b) for b in net.biases]
            bp[k][idx] += h
            bm[k][idx] -= h
            gb[idx] = (
                loss_at(net.weights, tuple(bp)) - loss_at(net.weights, tuple(bm))
            ) / (2 * h)
        grad_b.append(gb)
    return grad_w, grad_b


def relative_errors(analytic, numeric):
    a = np.concatenate([g.ravel() for g in analytic])
    n = np.concatenate([g.ravel() for g in numeric])
    scale = np.maximum(1e-8, np.maximum(np.abs(a), np.abs(n)))
    return np.abs(a - n) / scale


class TestForward:
    def test_identity_net_returns_input(self):
        net = identity_net(4)
        x = np.array([1.0, -2.0, 3.5, 0.0])
        np.testing.assert_array_equal(nn.forward(net, x), x)

    def test_single_relu_layer_hand_example(self):
        net = nn.DenseNet(
            (2, 2),
            ("relu",),
            (np.array([[2.0, 0.0], [0.0, 3.0]]),),
            (np.array([1.0, -1.0]),),
        )
        np.testing.assert_array_equal(nn.forward(net, [1.0, 1.0]), [3.0, 2.0])

    def test_matches_straight_line_oracle(self):
        rng = np.random.default_rng(7)
        net = nn.init_net((5, 7, 4, 3), seed=1)
        for _ in range(10):
            x = rng.normal(size=5)
            np.testing.assert_allclose(
                nn.forward(net, x), straight_line_forward(net, x), rtol=1e-12
            )

    def test_deterministic_bitwise(self):
        net = nn.init_net((4, 6, 2), seed=3)
        x = np.random.default_rng(0).normal(size=4)
        np.testing.assert_array_equal(nn.forward(net, x), nn.forward(net, x))

    def test_dimension_mismatch_rejected(self):
        net = nn.init_net((4, 2), seed=0)
        with pytest.raises(DimensionMismatchError):
            nn.forward(net, [1.0, 2.0, 3.0])

    def test_relu_last_layer_positive_scale_covariance(self):
        # scaling last-layer weights and biases by s > 0 scales output by s
        net = nn.init_net((3, 5, 4), activations=("relu", "relu"), seed=5)
        x = np.random.default_rng(1).normal(size=3)
        s = 2.75
        scaled = nn.DenseNet(
            net.layer_dims,
            net.activations,
            (net.weights[0], s * net.weights[1]),
            (net.biases[0], s * net.biases[1]),
        )
        np.testing.assert_allclose(
            nn.forward(scaled, x), s * nn.forward(net, x), rtol=1e-12
        )


class TestBackward:
    def test_zero_output_gradient_gives_zero_grads(self):
        net = nn.init_net((3, 4, 2), seed=0)
        X = np.random.default_rng(0).normal(size=(5, 3))
        out, cache = nn.forward_cached(net, X)
        grads = nn.backward(net, np.zeros_like(out), cache)
        for g in grads.weights + grads.biases:
            np.testing.assert_array_equal(g, np.zeros_like(g))

    def test_matches_finite_differences(self):
        rng = np.random.default_rng(42)
        for trial in range(5):
            dims = tuple(int(rng.integers(2, 6)) for _ in range(3))
            net = nn.init_net(dims, seed=trial)
            X = rng.normal(size=(3, dims[0]))

            def loss_fn(Y):
                return float((Y**2).sum())

            Y, cache = nn.forward_cached(net, X)
            grads = nn.backward(net, 2.0 * Y, cache)
            fd_w, fd_b = finite_difference_grads(net, X, loss_fn)
            errs = relative_errors(grads.weights + grads.biases, fd_w + fd_b)
            assert errs.max() < 1e-4

    def test_linear_net_closed_form(self):
        # loss = ||W x||^2 has dL/dW = 2 (W x) x^T, evaluated by hand code
        rng = np.random.default_rng(3)
        W = rng.normal(size=(4, 6))
        net = nn.DenseNet((6, 4), ("identity",), (W,), (np.zeros(4),))
        x = rng.normal(size=6)
        y, cache = nn.forward_cached(net, x[None, :])
        grads = nn.backward(net, 2.0 * y, cache)
        np.testing.assert_allclose(
            grads.weights[0], 2.0 * np.outer(W @ x, x), rtol=1e-12
        )

    def test_stale_cache_rejected(self):
        net = nn.init_net((3, 2), seed=0)
        X = np.ones((2, 3))
        out, cache = nn.forward_cached(net, X)
        updated = nn.sgd_step(
            net, nn.Gradients(tuple(np.zeros_like(w) for w in net.weights),
                              tuple(np.zeros_like(b) for b in net.biases)), 0.1
        )
        with pytest.raises(CacheMismatchError):
            nn.backward(updated, np.zeros_like(out), cache)

    def test_property_gradient_check_random_small_nets(self):
        # >= 99% of parameters within 1e-4 relative error over random nets
        rng = np.random.default_rng(11)
        all_errs = []
        for trial in range(12):
            n_layers = int(rng.integers(1, 4))
            dims = tuple(int(rng.integers(2, 9)) for _ in range(n_layers + 1))
            net = nn.init_net(dims, seed=100 + trial)
            X = rng.normal(size=(2, dims[0]))
            target = rng.normal(size=(2, dims[-1]))

            def loss_fn(Y):
                return float(((Y - target) ** 2).sum())

            Y, cache = nn.forward_cached(net, X)
            grads = nn.backward(net, 2.0 * (Y - target), cache)
            fd_w, fd_b = finite_difference_grads(net, X, loss_fn)
            all_errs.append(relative_errors(grads.weights + grads.biases, fd_w + fd_b))
        errs = np.concatenate(all_errs)
        assert (errs < 1e-4).mean() >= 0.99


class TestSgd:
    def _zero_grads(self, net):
        return nn.Gradients(
            tuple(np.zeros_like(w) for w in net.weights),
            tuple(np.zeros_like(b) for b in net.biases),
        )

    def test_zero_lr_leaves_net_unchanged(self):
        net = nn.init_net((3, 2), seed=0)
        grads = nn.Gradients(
            tuple(np.ones_like(w) for w in net.weights),
            tuple(np.ones_like(b) for b in net.biases),
        )
        stepped = nn.sgd_step(net, grads, 0.0)
        for a, b in zip(stepped.weights, net.weights):
            np.testing.assert_array_equal(a, b)

    def test_single_weight_update(self):
        net = nn.DenseNet((1, 1), ("identity",), (np.array([[1.0]]),), (np.zeros(1),))
        grads = nn.Gradients((np.array([[0.5]]),), (np.zeros(1),))
        stepped = nn.sgd_step(net, grads, 0.1)
        assert stepped.weights[0][0, 0] == pytest.approx(0.95, abs=1e-15)

    def test_non_finite_gradients_rejected(self):
        net = nn.init_net((2, 2), seed=0)
        grads = self._zero_grads(net)
        bad = nn.Gradients(
            (np.full_like(net.weights[0], np.nan),), grads.biases
        )
        with pytest.raises(TrainingDivergedError):
            nn.sgd_step(net, bad, 0.1)

    def test_converges_on_convex_quadratic(self):
        # minimize ||W x - t||^2 over W for a fixed input: convex in W
        rng = np.random.default_rng(0)
        net = nn.init_net((3, 2), activations=("identity",), seed=0)
        x = rng.normal(size=3)
        t = rng.normal(size=2)
        loss = np.inf
        for _ in range(500):
            y, cache = nn.forward_cached(net, x[None, :])
            resid = y[0] - t
            loss = float(resid @ resid)
            grads = nn.backward(net, 2.0 * resid[None, :], cache)
            net = nn.sgd_step(net, grads, 0.1)
        assert loss < 1e-6

    def test_momentum_optimizer_accelerates_same_quadratic(self):
        net = nn.init_net((3, 2), activations=("identity",), seed=0)
        x = np.random.default_rng(0).normal(size=3)
        t = np.random.default_rng(1).normal(size=2)
        opt = nn.SgdOptimizer(lr=0.05, momentum=0.5)
        for _ in range(500):
            y, cache = nn.forward_cached(net, x[None, :])
            resid = y[0] - t
            grads = nn.backward(net, 2.0 * resid[None, :], cache)
            net = opt.step(net, grads)
        assert float(resid @ resid) < 1e-6


class TestCheckpoint:
    def test_round_trip_bit_faithful(self, tmp_path):
        net = nn.init_net((4, 7, 3), seed=123)
        path = tmp_path / "net.json"
        nn.save_checkpoint(net, path)
        loaded, extra = nn.load_checkpoint(path)
        assert extra == {}
        assert loaded.layer_dims == net.layer_dims
        assert loaded.activations == net.activations
        for a, b in zip(loaded.weights, net.weights):
            np.testing.assert_array_equal(a, b)
        for a, b in zip(loaded.biases, net.biases):
            np.testing.assert_array_equal(a, b)

    def test_extra_block_preserved(self, tmp_path):
        net = nn.init_net((2, 2), seed=0)
        path = tmp_path / "net.json"
        nn.save_checkpoint(net, path, extra={"training_config": {"epochs": 3}})
        _, extra = nn.load_checkpoint(path)
        assert extra == {"training_config": {"epochs": 3}}

    def test_unknown_version_rejected(self, tmp_path):
        net = nn.init_net((2, 2), seed=0)
        doc = nn.checkpoint_document(net)
        doc["format_version"] = 99
        path = tmp_path / "net.json"
        path.write_text(__import__("json").dumps(doc))
        with pytest.raises(CheckpointError):
            nn.load_checkpoint(path)

    def test_extra_cannot_shadow_core_fields(self):
        net = nn.init_net((2, 2), seed=0)
        with pytest.raises(CheckpointError):
            nn.checkpoint_document(net, extra={"weights": []})


class TestValidation:
    def test_inconsistent_shapes_rejected(self):
        with pytest.raises(DimensionMismatchError):
            nn.DenseNet(
                (3, 2), ("identity",), (np.zeros((2, 4)),), (np.zeros(2),)
            )

    def test_non_finite_weights_rejected(self):
        with pytest.raises(DimensionMismatchError):
            nn.DenseNet(
                (2, 2), ("identity",), (np.full((2, 2), np.inf),), (np.zeros(2),)
            )

    def test_unknown_activation_rejected(self):
        with pytest.raises(DimensionMismatchError):
            nn.DenseNet((2, 2), ("tanh",), (np.eye(2),), (np.zeros(2),))
