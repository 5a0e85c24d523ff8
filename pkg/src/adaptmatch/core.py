"""Shared numeric contracts: probability vectors, scalar losses, similarity.

These are the reference (scalar, readable) forms of the quantities the
trainer computes in vectorized batches.  Tests compare the fast paths
against the functions here, so keep them dumb and obviously correct.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

# Probability vectors must sum to one within this tolerance.
PROB_SUM_TOL = 1e-6
# Probabilities are clamped to this floor before taking logs.
LOG_FLOOR = 1e-12


class ConfigError(ValueError):
    """Invalid configuration (bad value, unknown key, inconsistent block)."""


class NumericalError(RuntimeError):
    """Non-finite value produced where a finite one is required."""


def validate_probs(probs: np.ndarray) -> np.ndarray:
    """Check that `probs` is a well-formed probability vector.

    Entries must lie in [0, 1] (up to the sum tolerance) and sum to one
    within PROB_SUM_TOL.  Returns the vector as a float64 array.
    """
    p = np.asarray(probs, dtype=np.float64)
    if p.ndim != 1 or p.shape[0] < 2:
        raise ValueError(f"probability vector must be 1-d with >= 2 entries, got shape {p.shape}")
    if not np.all(np.isfinite(p)):
        raise ValueError("probability vector contains non-finite entries")
    if np.any(p < -PROB_SUM_TOL) or np.any(p > 1.0 + PROB_SUM_TOL):
        raise ValueError("probability entries must lie in [0, 1]")
    total = float(p.sum())
    if abs(total - 1.0) > PROB_SUM_TOL:
        raise ValueError(f"probabilities sum to {total!r}, expected 1 within {PROB_SUM_TOL}")
    return p


def cross_entropy(target: int, probs: np.ndarray) -> float:
    """Negative log-probability of `target` under `probs`.

    The probability is clamped below at LOG_FLOOR so the result is finite
    even when the model assigns (numerically) zero mass to the target.
    """
    p = validate_probs(probs)
    if not 0 <= target < p.shape[0]:
        raise ValueError(f"target index {target} out of range for {p.shape[0]} classes")
    return float(-np.log(max(float(p[target]), LOG_FLOOR)))


def cosine_similarity(a: np.ndarray, b: np.ndarray) -> float:
    """Cosine of the angle between two vectors, clipped into [-1, 1].

    Zero-norm inputs are rejected: the similarity is undefined there and a
    silent 0.0 would hide a degenerate embedding.
    """
    av = np.asarray(a, dtype=np.float64).ravel()
    bv = np.asarray(b, dtype=np.float64).ravel()
    if av.shape != bv.shape:
        raise ValueError(f"shape mismatch: {av.shape} vs {bv.shape}")
    na = float(np.linalg.norm(av))
    nb = float(np.linalg.norm(bv))
    if na == 0.0 or nb == 0.0:
        raise ValueError("cosine similarity undefined for zero-norm vector")
    return float(np.clip(float(av @ bv) / (na * nb), -1.0, 1.0))


def assert_finite(value, context: str) -> None:
    """Raise NumericalError if `value` (scalar or array) has NaN/Inf."""
    arr = np.asarray(value)
    if not np.all(np.isfinite(arr)):
        raise NumericalError(f"non-finite value in {context}")


@dataclass(frozen=True)
class BatchConfig:
    """Shape contract for one training iteration.

    labeled:      labeled samples per batch (B)
    mu:           unlabeled-to-labeled ratio; the unlabeled batch has mu*B rows
    num_classes:  output classes
    embed_dim:    encoder output width
    """

    labeled: int
    mu: int
    num_classes: int
    embed_dim: int

    def __post_init__(self):
        if self.labeled < 1:
            raise ConfigError(f"labeled batch size must be >= 1, got {self.labeled}")
        if self.mu < 1:
            raise ConfigError(f"unlabeled ratio mu must be >= 1, got {self.mu}")
        if self.num_classes < 2:
            raise ConfigError(f"need >= 2 classes, got {self.num_classes}")
        if self.embed_dim < 1:
            raise ConfigError(f"embedding dim must be >= 1, got {self.embed_dim}")

    @property
    def unlabeled(self) -> int:
        return self.labeled * self.mu
