"""Build hooks for the optional compiled kernel extension.

The package works without the extension (a numpy fallback is selected at
import time), so the build is marked optional: a missing compiler degrades
to the pure-Python backend instead of failing the install.
"""

from setuptools import Extension, setup

try:
    import numpy as np
    from Cython.Build import cythonize
except ImportError:  # pragma: no cover - source dist without build deps
    np = None
    cythonize = None


def extension_modules():
    if np is None or cythonize is None:
        return []
    ext = Extension(
        "adaptmatch._kernels._compiled",
        ["src/adaptmatch/_kernels/_compiled.pyx"],
        include_dirs=[np.get_include()],
        define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
        extra_compile_args=["-O3"],
        optional=True,
    )
    return cythonize(
        [ext],
        compiler_directives={
            "language_level": "3",
            "boundscheck": False,
            "wraparound": False,
            "cdivision": True,
        },
    )


setup(ext_modules=extension_modules())
