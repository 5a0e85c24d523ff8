"""Pure-numpy implementations of the hot per-iteration kernels.

This is the fallback backend and the semantic reference for the compiled
extension; both must agree to float64 round-off.  All functions take and
return float64 arrays (int64 for index arrays) and never mutate inputs.
"""

from __future__ import annotations

import numpy as np

BACKEND_NAME = "python"


def _f64(x) -> np.ndarray:
    return np.ascontiguousarray(x, dtype=np.float64)


def _i64(x) -> np.ndarray:
    return np.ascontiguousarray(x, dtype=np.int64)


def affine(x: np.ndarray, w: np.ndarray, b: np.ndarray) -> np.ndarray:
    """y = x @ w + b for x (n, i), w (i, o), b (o,)."""
    return _f64(x) @ _f64(w) + _f64(b)


def affine_grads(x: np.ndarray, w: np.ndarray, dy: np.ndarray):
    """Gradients of an affine layer: returns (dx, dw, db)."""
    x = _f64(x)
    w = _f64(w)
    dy = _f64(dy)
    return dy @ w.T, x.T @ dy, dy.sum(axis=0)


def leaky_relu(x: np.ndarray, slope: float) -> np.ndarray:
    """max(x, slope*x); slope 0 gives plain relu."""
    x = _f64(x)
    return np.where(x > 0.0, x, slope * x)


def leaky_relu_grad(x: np.ndarray, dy: np.ndarray, slope: float) -> np.ndarray:
    """Backward of leaky_relu given the pre-activation x."""
    x = _f64(x)
    return _f64(dy) * np.where(x > 0.0, 1.0, slope)


def tanh_forward(x: np.ndarray) -> np.ndarray:
    return np.tanh(_f64(x))


def tanh_grad(y: np.ndarray, dy: np.ndarray) -> np.ndarray:
    """Backward of tanh given the activation output y."""
    y = _f64(y)
    return _f64(dy) * (1.0 - y * y)


def softmax(logits: np.ndarray) -> np.ndarray:
    """Row-wise softmax with max subtraction for stability."""
    z = _f64(logits)
    z = z - z.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def row_max_argmax(probs: np.ndarray):
    """Per-row (max value, argmax index); ties resolve to the lowest index."""
    p = _f64(probs)
    idx = p.argmax(axis=1).astype(np.int64)
    return p[np.arange(p.shape[0]), idx], idx


def nll_rows(probs: np.ndarray, labels: np.ndarray) -> np.ndarray:
    """Per-row -log p[i, labels[i]] with the probability clamped at 1e-12."""
    p = _f64(probs)
    lab = _i64(labels)
    picked = p[np.arange(p.shape[0]), lab]
    return -np.log(np.maximum(picked, 1e-12))


def ce_softmax_grad(probs: np.ndarray, labels: np.ndarray, row_weights: np.ndarray) -> np.ndarray:
    """d(loss)/d(logits) for softmax + cross entropy, scaled per row.

    Row i receives row_weights[i] * (probs[i] - onehot(labels[i])).
    """
    p = _f64(probs)
    lab = _i64(labels)
    w = _f64(row_weights)
    out = p * w[:, None]
    out[np.arange(p.shape[0]), lab] -= w
    return out


def cosine_matrix(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Pairwise cosine similarity between rows of a (n, d) and b (m, d)."""
    a = _f64(a)
    b = _f64(b)
    na = np.linalg.norm(a, axis=1)
    nb = np.linalg.norm(b, axis=1)
    if np.any(na == 0.0) or np.any(nb == 0.0):
        raise ValueError("cosine similarity undefined for zero-norm rows")
    sims = (a @ b.T) / np.outer(na, nb)
    return np.clip(sims, -1.0, 1.0)
