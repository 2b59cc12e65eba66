"""Build the optional compiled kernel core.

The package works without it: ``leafann.kernels`` falls back to the numpy
implementation when ``leafann.kernels._core`` cannot be imported.
"""
import os

from setuptools import setup

ext_modules = []
if not os.environ.get("LEAFANN_NO_EXT"):
    try:
        import numpy as np
        from Cython.Build import cythonize
        from setuptools import Extension

        ext_modules = cythonize(
            [
                Extension(
                    "leafann.kernels._core",
                    ["src/leafann/kernels/_core.pyx"],
                    include_dirs=[np.get_include()],
                    # no contraction: dequantized floats must match numpy bit for bit
                    extra_compile_args=["-O3", "-ffp-contract=off"],
                    define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
                )
            ],
            compiler_directives={
                "language_level": "3",
                "boundscheck": False,
                "wraparound": False,
                "cdivision": True,
            },
        )
    except ImportError:
        ext_modules = []

setup(ext_modules=ext_modules)
