"""MLP forward/backward, optimizer, and parameter shadow."""

import numpy as np
import pytest

from adaptmatch import _kernels as K
from adaptmatch.core import ConfigError
from adaptmatch.network import (
    Architecture,
    EmaShadow,
    Network,
    SgdMomentum,
    add_grads,
    flatten_arrays,
)

ARCH = Architecture(input_dim=2, hidden=(16, 8), embed_dim=4, num_classes=3)


def _net(seed=0, arch=ARCH):
    return Network(arch, np.random.default_rng(seed))


class TestArchitecture:
    def test_encoder_dims(self):
        assert ARCH.encoder_dims == (2, 16, 8, 4)

    def test_no_hidden_layers_allowed(self):
        arch = Architecture(input_dim=3, hidden=(), embed_dim=3, num_classes=2)
        assert arch.encoder_dims == (3, 3)

    def test_validation(self):
        with pytest.raises(ConfigError):
            Architecture(input_dim=0, hidden=(4,), embed_dim=2, num_classes=2)
        with pytest.raises(ConfigError):
            Architecture(input_dim=2, hidden=(4,), embed_dim=2, num_classes=1)
        with pytest.raises(ConfigError):
            Architecture(input_dim=2, hidden=(4,), embed_dim=2, num_classes=2,
                         activation="sigmoid")
        with pytest.raises(ConfigError):
            Architecture(input_dim=2, hidden=(4,), embed_dim=2, num_classes=2,
                         leaky_slope=1.0)


class TestForward:
    def test_zero_weights_give_uniform_probs(self, rng):
        net = _net()
        for p in net.params:
            p[...] = 0.0
        cache = net.forward(rng.normal(size=(5, 2)))
        np.testing.assert_allclose(cache.probs, np.full((5, 3), 1.0 / 3.0), rtol=1e-12)

    def test_probs_are_distributions(self, rng):
        cache = _net().forward(rng.normal(size=(20, 2)))
        np.testing.assert_allclose(cache.probs.sum(axis=1), np.ones(20), rtol=1e-12)
        assert (cache.probs > 0).all()

    def test_forward_is_pure(self, rng):
        net = _net()
        x = rng.normal(size=(8, 2))
        before = [p.copy() for p in net.params]
        a = net.forward(x)
        b = net.forward(x)
        np.testing.assert_array_equal(a.probs, b.probs)
        np.testing.assert_array_equal(a.embedding, b.embedding)
        for p, q in zip(net.params, before):
            np.testing.assert_array_equal(p, q)

    def test_embedding_shape(self, rng):
        cache = _net().forward(rng.normal(size=(7, 2)))
        assert cache.embedding.shape == (7, 4)
        assert cache.logits.shape == (7, 3)

    def test_rejects_wrong_input_dim(self, rng):
        with pytest.raises(ValueError):
            _net().forward(rng.normal(size=(4, 3)))

    def test_init_depends_on_seed(self):
        a = _net(seed=1).param_vector()
        b = _net(seed=2).param_vector()
        assert not np.array_equal(a, b)
        c = _net(seed=1).param_vector()
        np.testing.assert_array_equal(a, c)

    def test_init_bound_scales_with_fan_in(self):
        net = _net(seed=5)
        w0 = net.params[0]  # fan_in 2
        assert np.abs(w0).max() <= 1.0 / np.sqrt(2.0) + 1e-12
        w1 = net.params[2]  # fan_in 16
        assert np.abs(w1).max() <= 1.0 / np.sqrt(16.0) + 1e-12


class TestBackward:
    def test_single_linear_layer_analytic_gradient(self, rng):
        """Softmax-CE gradient of a linear model is (p - onehot) x input."""
        arch = Architecture(input_dim=4, hidden=(), embed_dim=4, num_classes=3)
        net = Network(arch, np.random.default_rng(0))
        # make the encoder the identity so the head is the only real map
        net.params[0][...] = np.eye(4)
        net.params[1][...] = 0.0
        x = rng.normal(size=(6, 4))
        labels = rng.integers(0, 3, size=6).astype(np.int64)
        cache = net.forward(x)
        onehot = np.eye(3)[labels]
        d_logits = (cache.probs - onehot) / 6.0
        grads = net.backward(cache, d_logits=d_logits)
        np.testing.assert_allclose(grads[-2], x.T @ d_logits, rtol=1e-10, atol=1e-10)
        np.testing.assert_allclose(grads[-1], d_logits.sum(axis=0), rtol=1e-10, atol=1e-10)

    def test_full_network_finite_differences(self, rng):
        """Composite loss gradient vs central differences on every parameter."""
        net = _net(seed=3)
        x = rng.normal(size=(5, 2))
        labels = rng.integers(0, 3, size=5).astype(np.int64)

        def loss_at(vec):
            net.set_param_vector(vec)
            cache = net.forward(x)
            return float(K.nll_rows(cache.probs, labels).mean())

        theta = net.param_vector()
        cache = net.forward(x)
        onehot = np.eye(3)[labels]
        grads = net.backward(cache, d_logits=(cache.probs - onehot) / 5.0)
        flat = flatten_arrays(grads)
        h = 1e-6
        fd = np.zeros_like(flat)
        for k in range(flat.size):
            up = theta.copy()
            up[k] += h
            dn = theta.copy()
            dn[k] -= h
            fd[k] = (loss_at(up) - loss_at(dn)) / (2 * h)
        net.set_param_vector(theta)
        assert np.linalg.norm(flat - fd) / max(np.linalg.norm(fd), 1e-12) < 1e-6

    def test_embedding_injection_matches_head_path(self, rng):
        """Injecting dx of the head at the embedding equals the logits path."""
        net = _net(seed=4)
        x = rng.normal(size=(6, 2))
        cache = net.forward(x)
        d_logits = rng.normal(size=(6, 3))
        full = net.backward(cache, d_logits=d_logits)
        d_emb = d_logits @ net.params[-2].T
        via_emb = net.backward(cache, d_embedding=d_emb)
        # encoder gradients agree; head gradients exist only on the logits path
        for k in range(len(net.params) - 2):
            np.testing.assert_allclose(via_emb[k], full[k], rtol=1e-10, atol=1e-12)
        np.testing.assert_array_equal(via_emb[-2], np.zeros_like(net.params[-2]))

    def test_both_injections_sum(self, rng):
        net = _net(seed=5)
        x = rng.normal(size=(4, 2))
        cache = net.forward(x)
        d_logits = rng.normal(size=(4, 3))
        d_emb = rng.normal(size=(4, 4))
        combined = net.backward(cache, d_logits=d_logits, d_embedding=d_emb)
        a = net.backward(cache, d_logits=d_logits)
        b = net.backward(cache, d_embedding=d_emb)
        for c, x1, x2 in zip(combined, a, b):
            np.testing.assert_allclose(c, x1 + x2, rtol=1e-12, atol=1e-12)

    def test_requires_some_gradient(self, rng):
        net = _net()
        cache = net.forward(rng.normal(size=(2, 2)))
        with pytest.raises(ValueError):
            net.backward(cache)

    def test_tanh_variant_finite_differences(self, rng):
        arch = Architecture(input_dim=2, hidden=(6,), embed_dim=3, num_classes=2,
                            activation="tanh")
        net = Network(arch, np.random.default_rng(8))
        x = rng.normal(size=(4, 2))
        labels = rng.integers(0, 2, size=4).astype(np.int64)

        def loss_at(vec):
            net.set_param_vector(vec)
            return float(K.nll_rows(net.forward(x).probs, labels).mean())

        theta = net.param_vector()
        cache = net.forward(x)
        onehot = np.eye(2)[labels]
        flat = flatten_arrays(net.backward(cache, d_logits=(cache.probs - onehot) / 4.0))
        h = 1e-6
        fd = np.array([
            (loss_at(np.where(np.arange(theta.size) == k, theta + h, theta))
             - loss_at(np.where(np.arange(theta.size) == k, theta - h, theta))) / (2 * h)
            for k in range(theta.size)
        ])
        assert np.linalg.norm(flat - fd) / np.linalg.norm(fd) < 1e-6


class TestParamVector:
    def test_roundtrip(self, rng):
        net = _net(seed=6)
        vec = net.param_vector()
        other = _net(seed=7)
        other.set_param_vector(vec)
        np.testing.assert_array_equal(other.param_vector(), vec)
        for p, q in zip(net.params, other.params):
            np.testing.assert_array_equal(p, q)

    def test_size_mismatch_rejected(self):
        with pytest.raises(ValueError):
            _net().set_param_vector(np.zeros(3))


class TestSgdMomentum:
    def test_zero_momentum_is_plain_sgd(self):
        p = [np.array([1.0, 2.0])]
        g = [np.array([0.5, -0.25])]
        opt = SgdMomentum(p, lr=0.1, momentum=0.0)
        opt.step(p, g)
        np.testing.assert_allclose(p[0], [1.0 - 0.05, 2.0 + 0.025])

    def test_zero_grad_decays_velocity_and_still_moves(self):
        p = [np.array([1.0])]
        opt = SgdMomentum(p, lr=1.0, momentum=0.5)
        opt.step(p, [np.array([1.0])])      # v=1, p=0
        np.testing.assert_allclose(p[0], [0.0])
        opt.step(p, [np.array([0.0])])      # v=0.5, p=-0.5
        np.testing.assert_allclose(opt.velocity[0], [0.5])
        np.testing.assert_allclose(p[0], [-0.5])

    def test_two_steps_accumulate(self):
        # v1 = g, v2 = 0.9 g + g = 1.9 g; total displacement 2.9 lr g
        p = [np.zeros(1)]
        g = [np.array([1.0])]
        opt = SgdMomentum(p, lr=0.1, momentum=0.9)
        opt.step(p, g)
        opt.step(p, g)
        np.testing.assert_allclose(p[0], [-0.29], rtol=1e-12)

    def test_lr_override(self):
        p = [np.array([1.0])]
        opt = SgdMomentum(p, lr=0.1, momentum=0.0)
        opt.step(p, [np.array([1.0])], lr=0.01)
        np.testing.assert_allclose(p[0], [0.99])

    def test_validation(self):
        with pytest.raises(ConfigError):
            SgdMomentum([np.zeros(1)], lr=0.0)
        with pytest.raises(ConfigError):
            SgdMomentum([np.zeros(1)], lr=0.1, momentum=1.0)

    def test_convex_loss_nonincreasing(self, rng):
        """Full-batch GD on a linear softmax model decreases CE monotonically."""
        arch = Architecture(input_dim=3, hidden=(), embed_dim=3, num_classes=2)
        net = Network(arch, np.random.default_rng(9))
        net.params[0][...] = np.eye(3)
        net.params[1][...] = 0.0
        x = rng.normal(size=(40, 3))
        labels = (x[:, 0] > 0).astype(np.int64)
        opt = SgdMomentum(net.params, lr=0.2, momentum=0.0)
        onehot = np.eye(2)[labels]
        losses = []
        for _ in range(50):
            cache = net.forward(x)
            losses.append(float(K.nll_rows(cache.probs, labels).mean()))
            grads = net.backward(cache, d_logits=(cache.probs - onehot) / 40.0)
            # only the head moves; the identity encoder stays put
            grads[0][...] = 0.0
            grads[1][...] = 0.0
            opt.step(net.params, grads)
        diffs = np.diff(losses)
        assert (diffs <= 1e-12).all()
        assert losses[-1] < losses[0]


class TestEmaShadow:
    def test_initialized_to_copy(self):
        p = [np.array([1.0, 2.0])]
        shadow = EmaShadow(p, decay=0.9)
        p[0][0] = 100.0
        np.testing.assert_allclose(shadow.shadow[0], [1.0, 2.0])

    def test_decay_zero_mirrors_params(self):
        p = [np.array([1.0])]
        shadow = EmaShadow(p, decay=0.0)
        p[0][0] = 5.0
        shadow.update(p)
        np.testing.assert_allclose(shadow.shadow[0], [5.0])

    def test_decay_one_freezes(self):
        p = [np.array([1.0])]
        shadow = EmaShadow(p, decay=1.0)
        p[0][0] = 5.0
        for _ in range(10):
            shadow.update(p)
        np.testing.assert_allclose(shadow.shadow[0], [1.0])

    def test_hand_value(self):
        # start 1.0, params 0.0, decay 0.5: after one update 0.5, after two 0.25;
        # with params 0.5 instead: 0.75 after one update
        p = [np.array([0.5])]
        shadow = EmaShadow([np.array([1.0])], decay=0.5)
        shadow.update(p)
        np.testing.assert_allclose(shadow.shadow[0], [0.75])

    def test_converges_to_constant_params(self):
        p = [np.array([2.0])]
        shadow = EmaShadow([np.array([0.0])], decay=0.9)
        for _ in range(300):
            shadow.update(p)
        np.testing.assert_allclose(shadow.shadow[0], [2.0], atol=1e-12)

    def test_snapshot_is_detached(self):
        net = _net(seed=10)
        shadow = EmaShadow(net.params, decay=0.5)
        snap = shadow.snapshot_network(net.arch)
        snap.params[0][...] = 123.0
        assert not np.allclose(shadow.shadow[0], 123.0)

    def test_validation(self):
        with pytest.raises(ConfigError):
            EmaShadow([np.zeros(1)], decay=-0.1)
        with pytest.raises(ConfigError):
            EmaShadow([np.zeros(1)], decay=1.1)


class TestHelpers:
    def test_add_grads_in_place(self):
        a = [np.array([1.0]), np.array([2.0])]
        b = [np.array([0.5]), np.array([0.5])]
        out = add_grads(a, b)
        assert out is a
        np.testing.assert_allclose(a[0], [1.5])
        np.testing.assert_allclose(a[1], [2.5])

    def test_flatten_arrays(self):
        out = flatten_arrays([np.ones((2, 2)), np.zeros(3)])
        np.testing.assert_array_equal(out, [1, 1, 1, 1, 0, 0, 0])
