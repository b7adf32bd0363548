"""Builds the optional compiled kernel extension.

The package is fully functional without it: capval.kernels falls back to
the numpy implementation when the extension is absent (see
src/capval/kernels/__init__.py). Install with
``pip install -e . --no-build-isolation``.
"""

from setuptools import setup

try:
    from Cython.Build import cythonize

    ext_modules = cythonize(
        "src/capval/kernels/_native.pyx",
        language_level=3,
        compiler_directives={"boundscheck": False, "wraparound": False, "cdivision": True},
    )
except ImportError:
    ext_modules = []

setup(ext_modules=ext_modules)
