"""Builds the compiled CTC kernel.

The package works without the extension (a numpy fallback is selected at
import time), so a failed build here only costs speed.
"""

from setuptools import Extension, setup

try:
    from Cython.Build import cythonize
except ImportError:  # pure-Python install
    ext_modules = []
else:
    ext_modules = cythonize(
        [
            Extension(
                "lrasr.kernels._ctc_core",
                ["src/lrasr/kernels/_ctc_core.pyx"],
                extra_compile_args=["-O3"],
            )
        ],
        language_level=3,
    )

setup(ext_modules=ext_modules)
