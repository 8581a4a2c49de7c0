"""Build script: compiles the optional fast kernel extension.

The package works without the extension (a pure-Python reference backend is
selected at import time), so any build failure here degrades gracefully.
"""

from setuptools import Extension, setup

ext_modules = []
try:
    from Cython.Build import cythonize

    ext_modules = cythonize(
        [
            Extension(
                "heterospec.kernels._core",
                ["src/heterospec/kernels/_core.pyx"],
            )
        ],
        language_level=3,
    )
except ImportError:
    pass

setup(ext_modules=ext_modules)
