import os

import numpy as np
from setuptools import Extension, setup

try:
    from Cython.Build import cythonize
except ImportError:  # pure-Python install; kernels fall back to numpy
    cythonize = None


extensions = []
if cythonize is not None and not os.environ.get("DTVOPT_NO_EXT"):
    extensions = cythonize(
        [
            Extension(
                "dtvopt._core",
                ["src/dtvopt/_core.pyx"],
                include_dirs=[np.get_include()],
                extra_compile_args=["-O3"],
            )
        ],
        compiler_directives={"language_level": "3"},
    )

setup(ext_modules=extensions)
