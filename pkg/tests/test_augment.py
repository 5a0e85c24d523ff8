"""Augmentation policies: determinism, identity edges, weak/strong ordering."""

import numpy as np
import pytest

from adaptmatch.augment import (
    AugmentPolicy,
    apply_policy,
    augment_strong,
    augment_weak,
    image_policies,
    vector_policies,
)
from adaptmatch.core import ConfigError


def _identity_policy():
    return AugmentPolicy(kind="weak", noise_scale=0.0, dropout_prob=0.0, flip_prob=0.0,
                         max_shift=0, erase_size=0)


class TestPolicyValidation:
    def test_vector_defaults(self):
        weak, strong = vector_policies()
        assert weak.kind == "weak" and strong.kind == "strong"
        assert weak.noise_scale == pytest.approx(0.05)
        assert strong.noise_scale == pytest.approx(0.25)
        assert strong.dropout_prob == pytest.approx(0.1)
        assert weak.dropout_prob == 0.0

    def test_strong_must_dominate_weak(self):
        with pytest.raises(ConfigError):
            vector_policies(weak_noise=0.3, strong_noise=0.3)
        with pytest.raises(ConfigError):
            vector_policies(weak_noise=0.3, strong_noise=0.1)

    def test_bad_magnitudes_rejected(self):
        with pytest.raises(ConfigError):
            AugmentPolicy(kind="weak", noise_scale=-0.1)
        with pytest.raises(ConfigError):
            AugmentPolicy(kind="weak", dropout_prob=1.5)
        with pytest.raises(ConfigError):
            AugmentPolicy(kind="bizarre")

    def test_image_ops_need_shape(self):
        with pytest.raises(ConfigError):
            AugmentPolicy(kind="weak", flip_prob=0.5)

    def test_erase_must_fit_image(self):
        with pytest.raises(ConfigError):
            image_policies(image_shape=(4, 4), erase_size=5)

    def test_image_policies_carry_shape(self):
        weak, strong = image_policies(image_shape=(8, 8))
        assert weak.image_shape == (8, 8)
        assert strong.image_shape == (8, 8)
        assert strong.erase_size > 0
        assert weak.erase_size == 0


class TestDeterminism:
    def test_same_state_same_output(self, rng):
        x = rng.normal(size=(10, 6))
        _, strong = vector_policies()
        out1 = apply_policy(x, strong, np.random.default_rng(7))
        out2 = apply_policy(x, strong, np.random.default_rng(7))
        np.testing.assert_array_equal(out1, out2)

    def test_different_state_different_output(self, rng):
        x = rng.normal(size=(10, 6))
        _, strong = vector_policies()
        out1 = apply_policy(x, strong, np.random.default_rng(7))
        out2 = apply_policy(x, strong, np.random.default_rng(8))
        assert not np.array_equal(out1, out2)

    def test_draws_depend_only_on_shape(self):
        # consuming the generator identically for two inputs of equal shape
        # keeps downstream draws aligned
        _, strong = vector_policies()
        g1 = np.random.default_rng(3)
        g2 = np.random.default_rng(3)
        apply_policy(np.zeros((5, 4)), strong, g1)
        apply_policy(np.ones((5, 4)), strong, g2)
        assert g1.integers(0, 2**31) == g2.integers(0, 2**31)


class TestIdentityEdges:
    def test_zero_magnitude_vector_is_identity(self, rng):
        x = rng.normal(size=(7, 5))
        out = apply_policy(x, _identity_policy(), np.random.default_rng(0))
        np.testing.assert_array_equal(out, x)

    def test_zero_magnitude_image_is_identity(self, rng):
        x = rng.random(size=(3, 16))
        policy = AugmentPolicy(kind="weak", noise_scale=0.0, dropout_prob=0.0,
                               flip_prob=0.0, max_shift=0, erase_size=0, image_shape=(4, 4))
        out = apply_policy(x, policy, np.random.default_rng(0))
        np.testing.assert_array_equal(out, x)

    def test_input_not_mutated(self, rng):
        x = rng.normal(size=(4, 6))
        before = x.copy()
        _, strong = vector_policies()
        apply_policy(x, strong, np.random.default_rng(1))
        np.testing.assert_array_equal(x, before)

    def test_single_vector_shape_preserved(self, rng):
        x = rng.normal(size=6)
        _, strong = vector_policies()
        assert apply_policy(x, strong, np.random.default_rng(0)).shape == (6,)

    def test_rejects_3d_input(self, rng):
        _, strong = vector_policies()
        with pytest.raises(ValueError):
            apply_policy(rng.normal(size=(2, 3, 4)), strong, np.random.default_rng(0))


class TestImageOps:
    def test_forced_flip_mirrors_columns(self):
        img = np.arange(16, dtype=np.float64).reshape(1, 16)
        policy = AugmentPolicy(kind="weak", flip_prob=1.0, image_shape=(4, 4))
        out = apply_policy(img, policy, np.random.default_rng(0)).reshape(4, 4)
        np.testing.assert_array_equal(out, np.arange(16).reshape(4, 4)[:, ::-1])

    def test_flip_prob_zero_never_flips(self):
        img = np.arange(16, dtype=np.float64).reshape(1, 16)
        policy = AugmentPolicy(kind="weak", flip_prob=0.0, image_shape=(4, 4))
        out = apply_policy(img, policy, np.random.default_rng(0))
        np.testing.assert_array_equal(out, img)

    def test_shift_fills_with_zeros(self):
        # a constant-1 image shifted by up to k pixels keeps values in {0, 1}
        img = np.ones((1, 36))
        policy = AugmentPolicy(kind="weak", max_shift=2, image_shape=(6, 6))
        seen_zero = False
        for seed in range(20):
            out = apply_policy(img, policy, np.random.default_rng(seed))
            assert set(np.unique(out)) <= {0.0, 1.0}
            seen_zero = seen_zero or (out == 0.0).any()
        assert seen_zero  # at least one draw actually shifted

    def test_erase_zeroes_square(self):
        img = np.ones((1, 64))
        policy = AugmentPolicy(kind="strong", erase_size=3, image_shape=(8, 8))
        out = apply_policy(img, policy, np.random.default_rng(0))
        assert (out == 0.0).sum() == 9

    def test_dim_mismatch_rejected(self):
        policy = AugmentPolicy(kind="weak", flip_prob=1.0, image_shape=(4, 4))
        with pytest.raises(ValueError):
            apply_policy(np.ones((1, 15)), policy, np.random.default_rng(0))

    def test_noise_clips_to_unit_range(self):
        img = np.ones((2, 16))
        policy = AugmentPolicy(kind="strong", noise_scale=0.5, image_shape=(4, 4))
        out = apply_policy(img, policy, np.random.default_rng(0))
        assert (out >= 0.0).all() and (out <= 1.0).all()


class TestWeakStrongOrdering:
    def test_vector_strong_perturbs_more(self, rng):
        """Over many draws the strong view moves points further than the weak."""
        x = rng.normal(size=(1000, 8))
        weak, strong = vector_policies()
        gw = np.random.default_rng(11)
        gs = np.random.default_rng(12)
        dw = np.linalg.norm(augment_weak(x, weak, gw) - x, axis=1)
        ds = np.linalg.norm(augment_strong(x, strong, gs) - x, axis=1)
        assert ds.mean() > 2.0 * dw.mean()

    def test_image_strong_perturbs_more(self, rng):
        x = rng.random(size=(1000, 36))
        weak, strong = image_policies(image_shape=(6, 6), erase_size=2)
        gw = np.random.default_rng(21)
        gs = np.random.default_rng(22)
        dw = np.linalg.norm(apply_policy(x, weak, gw) - x, axis=1)
        ds = np.linalg.norm(apply_policy(x, strong, gs) - x, axis=1)
        assert ds.mean() > dw.mean()

    def test_kind_guards(self, rng):
        x = rng.normal(size=(2, 4))
        weak, strong = vector_policies()
        with pytest.raises(ValueError):
            augment_weak(x, strong, np.random.default_rng(0))
        with pytest.raises(ValueError):
            augment_strong(x, weak, np.random.default_rng(0))
