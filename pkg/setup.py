import os

import numpy as np
from setuptools import Extension, setup

# SHYVER_NO_EXT=1 skips the compiled core; the pure-Python kernels are used instead.
ext_modules = []
if not os.environ.get("SHYVER_NO_EXT"):
    try:
        from Cython.Build import cythonize
    except ImportError:
        cythonize = None
    if cythonize is not None:
        ext_modules = cythonize(
            [
                Extension(
                    "shyver._core",
                    ["src/shyver/_core.pyx"],
                    include_dirs=[np.get_include()],
                    extra_compile_args=["-O3", "-ffp-contract=off"],
                )
            ],
            compiler_directives={"language_level": "3"},
        )

setup(ext_modules=ext_modules)
