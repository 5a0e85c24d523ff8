# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled per-iteration kernels.

Both backends must produce bit-identical float64 results so that a
training run is reproducible regardless of which one is active.  That
constraint splits the kernels in two groups:

* order-exact elementwise loops (relu/tanh backward, masked CE gradient,
  row max) are hand-rolled here, where C beats numpy's temporaries;
* kernels whose speed lives in BLAS, SIMD transcendentals, or numpy's
  pairwise reductions (matrix products, tanh/exp/log, norm sums) reuse
  the numpy implementations, because a scalar loop is both slower and
  rounds differently (libm vs SIMD, sequential vs pairwise sums).
"""

import numpy as np

cimport numpy as cnp

from adaptmatch._kernels.reference import cosine_matrix, nll_rows, softmax

cnp.import_array()

BACKEND_NAME = "compiled"


def _f64(x):
    return np.ascontiguousarray(x, dtype=np.float64)


def _i64(x):
    return np.ascontiguousarray(x, dtype=np.int64)


def affine(x, w, b):
    """y = x @ w + b for x (n, i), w (i, o), b (o,).

    The matrix product stays on BLAS through numpy; a scalar loop cannot
    compete with it at any batch size this package uses.
    """
    out = np.dot(_f64(x), _f64(w))
    out += _f64(b)
    return out


def affine_grads(x, w, dy):
    """Gradients of an affine layer: returns (dx, dw, db).

    All three pieces are BLAS-shaped, so they delegate to numpy.
    """
    xa = _f64(x)
    wa = _f64(w)
    dya = _f64(dy)
    return np.dot(dya, wa.T), np.dot(xa.T, dya), dya.sum(axis=0)


def leaky_relu(x, double slope):
    """max(x, slope*x); slope 0 gives plain relu."""
    xa = _f64(x)
    cdef const double[:, ::1] xv = xa
    cdef Py_ssize_t n = xv.shape[0], m = xv.shape[1]
    out = np.empty((n, m), dtype=np.float64)
    cdef double[:, ::1] ov = out
    cdef Py_ssize_t i, j
    for i in range(n):
        for j in range(m):
            ov[i, j] = xv[i, j] if xv[i, j] > 0.0 else slope * xv[i, j]
    return out


def leaky_relu_grad(x, dy, double slope):
    """Backward of leaky_relu given the pre-activation x."""
    cdef const double[:, ::1] xv = _f64(x)
    cdef const double[:, ::1] dyv = _f64(dy)
    cdef Py_ssize_t n = xv.shape[0], m = xv.shape[1]
    out = np.empty((n, m), dtype=np.float64)
    cdef double[:, ::1] ov = out
    cdef Py_ssize_t i, j
    for i in range(n):
        for j in range(m):
            ov[i, j] = dyv[i, j] if xv[i, j] > 0.0 else slope * dyv[i, j]
    return out


def tanh_forward(x):
    # numpy's vectorized tanh outruns a libm loop by an order of magnitude
    return np.tanh(_f64(x))


def tanh_grad(y, dy):
    """Backward of tanh given the activation output y."""
    cdef const double[:, ::1] yv = _f64(y)
    cdef const double[:, ::1] dyv = _f64(dy)
    cdef Py_ssize_t n = yv.shape[0], m = yv.shape[1]
    out = np.empty((n, m), dtype=np.float64)
    cdef double[:, ::1] ov = out
    cdef Py_ssize_t i, j
    for i in range(n):
        for j in range(m):
            ov[i, j] = dyv[i, j] * (1.0 - yv[i, j] * yv[i, j])
    return out


def row_max_argmax(probs):
    """Per-row (max value, argmax index); ties resolve to the lowest index."""
    cdef const double[:, ::1] pv = _f64(probs)
    cdef Py_ssize_t n = pv.shape[0], m = pv.shape[1]
    vals = np.empty(n, dtype=np.float64)
    idx = np.empty(n, dtype=np.int64)
    cdef double[::1] vv = vals
    cdef cnp.int64_t[::1] iv = idx
    cdef Py_ssize_t i, j, best_j
    cdef double best
    for i in range(n):
        best = pv[i, 0]
        best_j = 0
        for j in range(1, m):
            if pv[i, j] > best:
                best = pv[i, j]
                best_j = j
        vv[i] = best
        iv[i] = best_j
    return vals, idx


def ce_softmax_grad(probs, labels, row_weights):
    """d(loss)/d(logits) for softmax + cross entropy, scaled per row."""
    cdef const double[:, ::1] pv = _f64(probs)
    cdef const cnp.int64_t[::1] lv = _i64(labels)
    cdef const double[::1] wv = _f64(row_weights)
    cdef Py_ssize_t n = pv.shape[0], m = pv.shape[1]
    out = np.empty((n, m), dtype=np.float64)
    cdef double[:, ::1] ov = out
    cdef Py_ssize_t i, j
    for i in range(n):
        for j in range(m):
            ov[i, j] = pv[i, j] * wv[i]
        ov[i, lv[i]] -= wv[i]
    return out
