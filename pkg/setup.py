import numpy as np
from setuptools import Extension, setup

# The compiled kernels are optional: the package falls back to the pure numpy
# implementation in ias._kernels._purepy when the extension is unavailable.
try:
    from Cython.Build import cythonize

    extensions = cythonize(
        [
            Extension(
                "ias._kernels._core",
                ["src/ias/_kernels/_core.pyx"],
                include_dirs=[np.get_include()],
                extra_compile_args=["-O3"],
                define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
            )
        ],
        language_level=3,
    )
except ImportError:
    extensions = []

setup(ext_modules=extensions)
