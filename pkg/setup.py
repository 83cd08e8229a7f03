"""Builds the optional compiled kernel extension.

The package works without it (herl.kernels falls back to the pure-numpy
implementation), so a missing compiler must not break installation.
"""

from setuptools import Extension, setup

try:
    from Cython.Build import cythonize

    extensions = cythonize(
        [
            Extension(
                "herl._kernels",
                ["src/herl/_kernels.pyx"],
                extra_compile_args=["-O3", "-march=native", "-funroll-loops"],
                optional=True,
            )
        ],
        language_level=3,
    )
except ImportError:
    extensions = []

setup(ext_modules=extensions)
