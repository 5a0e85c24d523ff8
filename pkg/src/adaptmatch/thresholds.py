"""Self-adjusting pseudo-label thresholds.

A single global threshold follows the batch-mean confidence through an
exponential moving average, starting at 1/C (uniform confidence).  Each
class additionally tracks how many recent weak-view predictions cleared
the global threshold; normalizing those counts by the best class yields a
per-class scaling in [0, 1], and the per-class acceptance thresholds are
that scaling times the global value.  Classes the model is still bad at
therefore get lower bars, letting more of their pseudo-labels through.

Update order within one training iteration is part of the contract:

1. ``local()``        - thresholds for this batch (previous counts, current tau)
2. ``decide_pseudo_labels(probs, sigma)``
3. ``observe(probs)``  - count confident predictions with the current tau
4. ``update_global(probs)`` - move tau toward the batch mean confidence
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass

import numpy as np

from . import _kernels as K
from .core import ConfigError


@dataclass
class PseudoLabels:
    """Vectorized accept/reject decisions for one unlabeled batch.

    labels:      argmax class per sample (ties -> lowest index)
    confidence:  max predicted probability per sample
    accepted:    confidence >= per-class threshold of the argmax class
    """

    labels: np.ndarray
    confidence: np.ndarray
    accepted: np.ndarray

    @property
    def num_accepted(self) -> int:
        return int(self.accepted.sum())


def normalize_status(counts: np.ndarray) -> np.ndarray:
    """Scale per-class counts by the largest one.

    All-zero counts (nothing confident yet) normalize to all-ones so every
    class starts with the full global threshold rather than a zero bar.
    """
    c = np.asarray(counts, dtype=np.float64)
    if c.ndim != 1 or c.shape[0] < 2:
        raise ValueError(f"counts must be 1-d with >= 2 entries, got shape {c.shape}")
    if np.any(c < 0):
        raise ValueError("counts must be non-negative")
    top = c.max()
    if top == 0.0:
        return np.ones_like(c)
    return c / top


def local_thresholds(status: np.ndarray, tau: float) -> np.ndarray:
    """Per-class thresholds: normalized status times the global threshold."""
    s = np.asarray(status, dtype=np.float64)
    if np.any(s < 0.0) or np.any(s > 1.0):
        raise ValueError("status entries must lie in [0, 1]")
    if not 0.0 <= tau <= 1.0:
        raise ValueError(f"global threshold must lie in [0, 1], got {tau}")
    return s * tau


def count_confident(probs: np.ndarray, tau: float) -> np.ndarray:
    """Per-class count of samples whose max probability strictly exceeds tau.

    A sample contributes to the class it is predicted as (argmax).  Strict
    comparison means a batch sitting exactly at tau adds nothing.
    """
    p = np.asarray(probs, dtype=np.float64)
    conf, labels = K.row_max_argmax(p)
    num_classes = p.shape[1]
    counts = np.zeros(num_classes, dtype=np.int64)
    passed = conf > tau
    np.add.at(counts, labels[passed], 1)
    return counts


def decide_pseudo_labels(probs: np.ndarray, sigma: np.ndarray) -> PseudoLabels:
    """Accept a sample when its max probability reaches the threshold of its
    argmax class (inclusive: confidence == threshold passes)."""
    p = np.asarray(probs, dtype=np.float64)
    s = np.asarray(sigma, dtype=np.float64)
    if s.shape != (p.shape[1],):
        raise ValueError(f"need one threshold per class, got {s.shape} for {p.shape[1]} classes")
    conf, labels = K.row_max_argmax(p)
    accepted = conf >= s[labels]
    return PseudoLabels(labels=labels, confidence=conf, accepted=accepted)


class ThresholdState:
    """Single-writer container for the global threshold and count window.

    The window holds the per-class confident counts of the most recent
    ``window_batches`` batches (one pass over the unlabeled pool); older
    batches fall out so the status tracks what the model does now.
    """

    def __init__(self, num_classes: int, decay: float = 0.999, window_batches: int = 1):
        if num_classes < 2:
            raise ConfigError(f"need >= 2 classes, got {num_classes}")
        if not 0.0 < decay < 1.0:
            raise ConfigError(f"threshold decay must lie in (0, 1), got {decay}")
        if window_batches < 1:
            raise ConfigError(f"window must span >= 1 batch, got {window_batches}")
        self.num_classes = int(num_classes)
        self.decay = float(decay)
        self.window_batches = int(window_batches)
        self.tau = 1.0 / num_classes
        self.step = 0
        self._window: deque[np.ndarray] = deque(maxlen=window_batches)

    @property
    def counts(self) -> np.ndarray:
        """Sum of per-class confident counts across the window."""
        total = np.zeros(self.num_classes, dtype=np.int64)
        for batch_counts in self._window:
            total += batch_counts
        return total

    def status(self) -> np.ndarray:
        return normalize_status(self.counts)

    def local(self) -> np.ndarray:
        return local_thresholds(self.status(), self.tau)

    def observe(self, probs: np.ndarray) -> np.ndarray:
        """Add this batch's confident counts (measured against the current
        global threshold) to the window.  Returns the batch counts."""
        batch_counts = count_confident(probs, self.tau)
        if batch_counts.shape[0] != self.num_classes:
            raise ValueError("probs class dimension does not match the state")
        self._window.append(batch_counts)
        return batch_counts

    def update_global(self, probs: np.ndarray) -> float:
        """Move the global threshold toward this batch's mean max-probability."""
        p = np.asarray(probs, dtype=np.float64)
        if p.ndim != 2 or p.shape[0] == 0:
            raise ValueError(f"need a non-empty (n, classes) batch, got shape {p.shape}")
        conf, _ = K.row_max_argmax(p)
        self.tau = self.decay * self.tau + (1.0 - self.decay) * float(conf.mean())
        self.step += 1
        return self.tau

    def to_dict(self) -> dict:
        return {
            "num_classes": self.num_classes,
            "decay": self.decay,
            "window_batches": self.window_batches,
            "tau": self.tau,
            "step": self.step,
            "window": [c.tolist() for c in self._window],
        }

    @classmethod
    def from_dict(cls, payload: dict) -> "ThresholdState":
        state = cls(
            num_classes=payload["num_classes"],
            decay=payload["decay"],
            window_batches=payload["window_batches"],
        )
        state.tau = float(payload["tau"])
        state.step = int(payload["step"])
        for batch_counts in payload["window"]:
            state._window.append(np.asarray(batch_counts, dtype=np.int64))
        return state
