"""Builds the optional Cython kernels; the package falls back to numpy without them."""

import os

from setuptools import Extension, setup


def extensions():
    if os.environ.get("PVANOMALY_NO_EXT"):
        return []
    try:
        import numpy as np
        from Cython.Build import cythonize
    except ImportError:
        return []
    ext = Extension(
        "pvanomaly._kernels",
        ["src/pvanomaly/_kernels.pyx"],
        include_dirs=[np.get_include()],
        define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
        extra_compile_args=["-O3"],
    )
    return cythonize([ext], compiler_directives={"language_level": 3})


setup(ext_modules=extensions())
