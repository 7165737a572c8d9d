import os

import numpy as np
from Cython.Build import cythonize
from setuptools import Extension, setup

openmp = [] if os.environ.get("NEUTRAL_INCLUSION_NO_OPENMP") else ["-fopenmp"]

extensions = [
    Extension(
        "neutral_inclusion._kernels._ckernels",
        ["src/neutral_inclusion/_kernels/_ckernels.pyx"],
        include_dirs=[np.get_include()],
        extra_compile_args=["-O3"] + openmp,
        extra_link_args=openmp,
    )
]

setup(ext_modules=cythonize(extensions, compiler_directives={"language_level": "3"}))
