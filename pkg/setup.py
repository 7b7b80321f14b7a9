"""Builds the optional compiled kernel extension.

Set PROBE_PURE_PYTHON=1 to skip the extension entirely; the package then
runs on the pure-Python kernel fallback.
"""

import os

from setuptools import Extension, setup

ext_modules = []
if not os.environ.get("PROBE_PURE_PYTHON"):
    try:
        from Cython.Build import cythonize

        ext_modules = cythonize(
            [
                Extension(
                    "mmprobe._kernels._core",
                    ["src/mmprobe/_kernels/_core.pyx"],
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
