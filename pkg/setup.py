"""Build script for the compiled kernel extension.

The extension is optional at runtime: if uqnav._kernels is missing the
package falls back to the pure-numpy kernels (see uqnav.kernels).
"""

from setuptools import Extension, setup

import numpy as np
from Cython.Build import cythonize

ext = Extension(
    "uqnav._kernels",
    ["src/uqnav/_kernels.pyx"],
    include_dirs=[np.get_include()],
    extra_compile_args=["-O3"],
    define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
)

setup(ext_modules=cythonize([ext], language_level="3"))
