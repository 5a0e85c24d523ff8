"""Kernel backend selection.

Two interchangeable backends implement the per-iteration hot kernels:

* ``compiled``  - Cython extension (built at install time, optional)
* ``python``    - pure numpy reference

The active backend is chosen once at import via the ADAPTMATCH_KERNELS
environment variable: "compiled", "python", or "auto" (default; compiled
when available, numpy otherwise).  ``get_backend`` exposes both for the
equivalence tests and the benchmark.
"""

from __future__ import annotations

import os

from . import reference

_KERNEL_NAMES = (
    "affine",
    "affine_grads",
    "leaky_relu",
    "leaky_relu_grad",
    "tanh_forward",
    "tanh_grad",
    "softmax",
    "row_max_argmax",
    "nll_rows",
    "ce_softmax_grad",
    "cosine_matrix",
)

try:
    from . import _compiled
except ImportError:  # extension not built
    _compiled = None


def get_backend(name: str):
    """Return the backend module for "python" or "compiled"."""
    if name == "python":
        return reference
    if name == "compiled":
        if _compiled is None:
            raise ImportError("compiled kernel extension is not available")
        return _compiled
    raise ValueError(f"unknown kernel backend {name!r}")


def compiled_available() -> bool:
    return _compiled is not None


def _select():
    choice = os.environ.get("ADAPTMATCH_KERNELS", "auto").strip().lower()
    if choice == "auto":
        return _compiled if _compiled is not None else reference
    return get_backend(choice)


_active = _select()
ACTIVE_BACKEND = _active.BACKEND_NAME

for _name in _KERNEL_NAMES:
    globals()[_name] = getattr(_active, _name)

__all__ = list(_KERNEL_NAMES) + ["ACTIVE_BACKEND", "get_backend", "compiled_available"]
