"""Build script for the compiled convolution kernels.

The package works without the extension (a numpy fallback is selected at
import time); set CROSSNORM_NO_EXT=1 to skip compiling it entirely.
"""

import os

from setuptools import Extension, setup

ext_modules = []
if os.environ.get("CROSSNORM_NO_EXT") != "1":
    from Cython.Build import cythonize

    ext_modules = cythonize(
        [
            Extension(
                "crossnorm._kernels._conv_cy",
                sources=["src/crossnorm/_kernels/_conv_cy.pyx"],
                extra_compile_args=["-O3", "-fopenmp"],
                extra_link_args=["-fopenmp"],
            )
        ],
        compiler_directives={"language_level": "3"},
    )

setup(ext_modules=ext_modules)
