"""Build script for the optional compiled aggregation kernel.

The package works without the extension (a scipy-backed fallback is
selected at import time); building it just makes propagation faster.
"""

import numpy
from setuptools import Extension, setup
from Cython.Build import cythonize

extensions = [
    Extension(
        "ccrec._kernels._ext",
        ["src/ccrec/_kernels/_ext.pyx"],
        include_dirs=[numpy.get_include()],
        extra_compile_args=["-O3"],
        define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
    )
]

setup(ext_modules=cythonize(extensions, language_level=3))
