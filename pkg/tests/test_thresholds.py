"""Adaptive thresholds: global EMA, per-class counts, accept decisions."""

import numpy as np
import pytest

from adaptmatch.core import ConfigError
from adaptmatch.thresholds import (
    PseudoLabels,
    ThresholdState,
    count_confident,
    decide_pseudo_labels,
    local_thresholds,
    normalize_status,
)


def _probs_with_mean_conf(m: float, num_classes: int, rows: int, labels=None) -> np.ndarray:
    """Rows whose max probability is exactly m (argmax rotates unless given)."""
    assert m > 1.0 / num_classes
    rest = (1.0 - m) / (num_classes - 1)
    probs = np.full((rows, num_classes), rest)
    for i in range(rows):
        c = (i % num_classes) if labels is None else labels[i]
        probs[i, c] = m
    return probs


class TestGlobalThreshold:
    def test_initial_value_is_uniform_confidence(self):
        for c in (2, 10, 100):
            assert ThresholdState(num_classes=c).tau == pytest.approx(1.0 / c)

    def test_single_update_hand_value(self):
        # 0.999 * 0.1 + 0.001 * 0.5 = 0.1004
        state = ThresholdState(num_classes=10, decay=0.999)
        probs = _probs_with_mean_conf(0.5, 10, 10)
        assert state.tau == pytest.approx(0.1)
        state.update_global(probs)
        assert state.tau == pytest.approx(0.1004, abs=1e-12)

    def test_decay_near_one_freezes(self):
        state = ThresholdState(num_classes=10, decay=1.0 - 1e-15)
        probs = _probs_with_mean_conf(0.9, 10, 8)
        before = state.tau
        for _ in range(100):
            state.update_global(probs)
        assert state.tau == pytest.approx(before, abs=1e-12)

    def test_geometric_convergence_closed_form(self):
        # constant stream at m: tau_t = m + (tau_0 - m) * decay^t
        decay, m, steps = 0.99, 0.8, 250
        state = ThresholdState(num_classes=4, decay=decay)
        probs = _probs_with_mean_conf(m, 4, 12)
        tau0 = state.tau
        for _ in range(steps):
            state.update_global(probs)
        expected = m + (tau0 - m) * decay**steps
        assert state.tau == pytest.approx(expected, rel=1e-9)

    def test_monotone_rise_toward_constant_stream(self):
        state = ThresholdState(num_classes=4, decay=0.95)
        probs = _probs_with_mean_conf(0.9, 4, 8)
        taus = [state.tau]
        for _ in range(50):
            taus.append(state.update_global(probs))
        diffs = np.diff(taus)
        assert (diffs > 0).all()
        assert taus[-1] < 0.9

    def test_betweenness(self, rng):
        # one update lands between the old tau and the batch mean
        state = ThresholdState(num_classes=5, decay=0.9)
        for _ in range(200):
            probs = K_softmax_rows(rng, 6, 5)
            old = state.tau
            mean_conf = probs.max(axis=1).mean()
            new = state.update_global(probs)
            lo, hi = min(old, mean_conf), max(old, mean_conf)
            assert lo - 1e-12 <= new <= hi + 1e-12

    def test_step_counter(self):
        state = ThresholdState(num_classes=3)
        probs = _probs_with_mean_conf(0.7, 3, 6)
        for expected in (1, 2, 3):
            state.update_global(probs)
            assert state.step == expected

    def test_rejects_empty_batch(self):
        state = ThresholdState(num_classes=3)
        with pytest.raises(ValueError):
            state.update_global(np.zeros((0, 3)))

    def test_constructor_validation(self):
        with pytest.raises(ConfigError):
            ThresholdState(num_classes=1)
        with pytest.raises(ConfigError):
            ThresholdState(num_classes=3, decay=1.0)
        with pytest.raises(ConfigError):
            ThresholdState(num_classes=3, decay=0.0)
        with pytest.raises(ConfigError):
            ThresholdState(num_classes=3, window_batches=0)


def K_softmax_rows(rng, rows, classes):
    logits = rng.normal(size=(rows, classes)) * 2.0
    e = np.exp(logits - logits.max(axis=1, keepdims=True))
    return e / e.sum(axis=1, keepdims=True)


class TestCountConfident:
    def test_two_row_example(self):
        probs = np.array([[0.9, 0.1], [0.2, 0.8]])
        np.testing.assert_array_equal(count_confident(probs, 0.5), [1, 1])

    def test_three_row_example(self):
        probs = np.array([[0.9, 0.1], [0.2, 0.8], [0.7, 0.3]])
        np.testing.assert_array_equal(count_confident(probs, 0.6), [2, 1])

    def test_strictly_greater_than(self):
        # max exactly at tau does not count
        probs = np.array([[0.6, 0.4], [0.61, 0.39]])
        np.testing.assert_array_equal(count_confident(probs, 0.6), [1, 0])

    def test_counts_follow_argmax_class(self):
        probs = np.array([[0.1, 0.8, 0.1], [0.05, 0.05, 0.9], [0.0, 0.7, 0.3]])
        np.testing.assert_array_equal(count_confident(probs, 0.5), [0, 2, 1])

    def test_total_bounded_by_batch(self, rng):
        for _ in range(50):
            probs = K_softmax_rows(rng, 17, 4)
            counts = count_confident(probs, float(rng.random()))
            assert counts.sum() <= 17
            assert (counts >= 0).all()


class TestNormalizeStatus:
    def test_hand_example(self):
        np.testing.assert_allclose(normalize_status(np.array([4, 2, 0])), [1.0, 0.5, 0.0])

    def test_all_zero_gives_ones(self):
        np.testing.assert_array_equal(normalize_status(np.zeros(3)), np.ones(3))

    def test_range_and_top(self, rng):
        for _ in range(100):
            counts = rng.integers(0, 50, size=6)
            status = normalize_status(counts)
            assert (status >= 0).all() and (status <= 1).all()
            assert status.max() == pytest.approx(1.0)

    def test_rejects_bad_input(self):
        with pytest.raises(ValueError):
            normalize_status(np.array([3]))
        with pytest.raises(ValueError):
            normalize_status(np.array([-1, 2]))


class TestLocalThresholds:
    def test_hand_example(self):
        sigma = local_thresholds(np.array([1.0, 0.5]), 0.8)
        np.testing.assert_allclose(sigma, [0.8, 0.4])

    def test_never_exceeds_global(self, rng):
        for _ in range(100):
            status = rng.random(size=5)
            status[rng.integers(0, 5)] = 1.0
            tau = float(rng.random())
            sigma = local_thresholds(status, tau)
            assert (sigma <= tau + 1e-12).all()

    def test_top_class_gets_global_value(self):
        sigma = local_thresholds(np.array([0.25, 1.0, 0.5]), 0.6)
        assert sigma[1] == pytest.approx(0.6)
        assert sigma.argmax() == 1

    def test_validation(self):
        with pytest.raises(ValueError):
            local_thresholds(np.array([1.2, 0.5]), 0.5)
        with pytest.raises(ValueError):
            local_thresholds(np.array([1.0, 0.5]), 1.5)


class TestDecide:
    def test_inclusive_acceptance(self):
        probs = np.array([[0.6, 0.4], [0.59, 0.41]])
        sigma = np.array([0.6, 0.6])
        out = decide_pseudo_labels(probs, sigma)
        np.testing.assert_array_equal(out.accepted, [True, False])
        np.testing.assert_array_equal(out.labels, [0, 0])
        np.testing.assert_allclose(out.confidence, [0.6, 0.59])
        assert out.num_accepted == 1

    def test_per_class_bars_differ(self):
        probs = np.array([[0.7, 0.3], [0.3, 0.7]])
        out = decide_pseudo_labels(probs, np.array([0.9, 0.6]))
        np.testing.assert_array_equal(out.accepted, [False, True])

    def test_tie_goes_to_lowest_index(self):
        probs = np.array([[0.5, 0.5]])
        out = decide_pseudo_labels(probs, np.array([0.4, 0.9]))
        np.testing.assert_array_equal(out.labels, [0])
        np.testing.assert_array_equal(out.accepted, [True])

    def test_acceptance_invariant(self, rng):
        for _ in range(30):
            probs = K_softmax_rows(rng, 23, 5)
            sigma = rng.random(size=5)
            out = decide_pseudo_labels(probs, sigma)
            np.testing.assert_array_equal(out.accepted, out.confidence >= sigma[out.labels])

    def test_brute_force_equivalence(self, rng):
        """Vectorized decisions match a per-sample reimplementation on 10^4 cases."""
        total = 0
        while total < 10_000:
            rows, classes = 50, int(rng.integers(2, 7))
            probs = K_softmax_rows(rng, rows, classes)
            sigma = rng.random(size=classes)
            out = decide_pseudo_labels(probs, sigma)
            for i in range(rows):
                best = 0
                for c in range(1, classes):
                    if probs[i, c] > probs[i, best]:
                        best = c
                assert out.labels[i] == best
                assert out.confidence[i] == probs[i, best]
                assert bool(out.accepted[i]) == (probs[i, best] >= sigma[best])
            total += rows

    def test_lower_bars_accept_supersets(self, rng):
        """Lowering thresholds never rejects a previously accepted sample."""
        probs = K_softmax_rows(rng, 40, 4)
        hi = np.full(4, 0.7)
        lo = np.full(4, 0.4)
        acc_hi = decide_pseudo_labels(probs, hi).accepted
        acc_lo = decide_pseudo_labels(probs, lo).accepted
        assert (acc_lo | ~acc_hi).all()

    def test_shape_validation(self):
        with pytest.raises(ValueError):
            decide_pseudo_labels(np.array([[0.5, 0.5]]), np.array([0.5, 0.5, 0.5]))


class TestThresholdStateWindow:
    def test_counts_accumulate_within_window(self):
        state = ThresholdState(num_classes=2, decay=0.999, window_batches=3)
        probs = np.array([[0.9, 0.1], [0.2, 0.8]])
        state.observe(probs)
        np.testing.assert_array_equal(state.counts, [1, 1])
        state.observe(probs)
        np.testing.assert_array_equal(state.counts, [2, 2])

    def test_old_batches_fall_out(self):
        state = ThresholdState(num_classes=2, decay=0.999, window_batches=2)
        a = np.array([[0.9, 0.1]])   # class 0 confident
        b = np.array([[0.1, 0.9]])   # class 1 confident
        state.observe(a)
        state.observe(a)
        np.testing.assert_array_equal(state.counts, [2, 0])
        state.observe(b)
        np.testing.assert_array_equal(state.counts, [1, 1])
        state.observe(b)
        np.testing.assert_array_equal(state.counts, [0, 2])

    def test_observe_uses_current_tau(self):
        state = ThresholdState(num_classes=2, decay=0.5)
        state.tau = 0.85
        probs = np.array([[0.9, 0.1], [0.8, 0.2]])
        counts = state.observe(probs)
        np.testing.assert_array_equal(counts, [1, 0])

    def test_fresh_state_local_equals_tau_everywhere(self):
        # empty window -> all-ones status -> sigma == tau for every class
        state = ThresholdState(num_classes=4)
        np.testing.assert_allclose(state.local(), np.full(4, state.tau))

    def test_local_never_exceeds_tau(self, rng):
        state = ThresholdState(num_classes=3, decay=0.9, window_batches=2)
        for _ in range(50):
            probs = K_softmax_rows(rng, 12, 3)
            sigma = state.local()
            assert (sigma <= state.tau + 1e-12).all()
            state.observe(probs)
            state.update_global(probs)

    def test_most_counted_class_has_highest_bar(self):
        state = ThresholdState(num_classes=3, decay=0.999)
        state.tau = 0.5
        probs = np.array([[0.9, 0.05, 0.05], [0.8, 0.1, 0.1], [0.1, 0.8, 0.1]])
        state.observe(probs)
        sigma = state.local()
        assert sigma[0] == pytest.approx(0.5)      # 2 confident hits
        assert sigma[1] == pytest.approx(0.25)     # 1 hit -> half the bar
        assert sigma[2] == pytest.approx(0.0)      # no hits

    def test_dict_roundtrip(self, rng):
        state = ThresholdState(num_classes=3, decay=0.99, window_batches=2)
        for _ in range(5):
            probs = K_softmax_rows(rng, 9, 3)
            state.observe(probs)
            state.update_global(probs)
        clone = ThresholdState.from_dict(state.to_dict())
        assert clone.tau == state.tau
        assert clone.step == state.step
        assert clone.decay == state.decay
        assert clone.window_batches == state.window_batches
        np.testing.assert_array_equal(clone.counts, state.counts)
        np.testing.assert_allclose(clone.local(), state.local())


class TestPseudoLabelsContainer:
    def test_num_accepted(self):
        out = PseudoLabels(
            labels=np.array([0, 1, 1]),
            confidence=np.array([0.9, 0.5, 0.8]),
            accepted=np.array([True, False, True]),
        )
        assert out.num_accepted == 2
