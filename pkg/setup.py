"""Build hook for the optional compiled kernel.

The extension is a pure speedup: if Cython or a C compiler is missing the
install still succeeds and the package falls back to the Python kernel at
import time (see gazepick.kernels).
"""

from setuptools import Extension, setup

try:
    from Cython.Build import cythonize
except ImportError:
    cythonize = None


def extensions():
    if cythonize is None:
        return []
    ext = Extension("gazepick.kernels._native", ["src/gazepick/kernels/_native.pyx"])
    return cythonize([ext], language_level=3)


setup(ext_modules=extensions())
