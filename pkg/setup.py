"""Build script: compiles the optional hot-loop extension.

The package works without the extension (pure numpy fallbacks are selected at
import time); the build therefore degrades gracefully when no C compiler or
Cython is available.
"""

import os
import sys

from setuptools import setup

ext_modules = []
try:
    import numpy as np
    from Cython.Build import cythonize
    from setuptools import Extension

    extra_compile = ["-O3", "-fopenmp"]
    extra_link = ["-fopenmp"]
    if os.environ.get("PSATTACK_NO_OPENMP"):
        extra_compile = ["-O3"]
        extra_link = []
    ext_modules = cythonize(
        [
            Extension(
                "psattack.diffcore._kern_hot",
                ["src/psattack/diffcore/_kern_hot.pyx"],
                include_dirs=[np.get_include()],
                extra_compile_args=extra_compile,
                extra_link_args=extra_link,
            )
        ],
        language_level=3,
    )
except Exception as exc:  # pragma: no cover - build-environment dependent
    sys.stderr.write(f"psattack: skipping compiled kernels ({exc}); "
                     "pure numpy fallbacks will be used\n")
    ext_modules = []

setup(ext_modules=ext_modules)
