"""Build the optional compiled core.

The extension is optional: if Cython or a C compiler is unavailable the
package installs without it and ``shortfall._backend`` falls back to the
pure-Python kernels.
"""
import os

from setuptools import setup

ext_modules = []
if not os.environ.get("SHORTFALL_NO_EXT"):
    try:
        import numpy as np
        from Cython.Build import cythonize
        from setuptools import Extension

        ext_modules = cythonize(
            [
                Extension(
                    "shortfall._core",
                    ["src/shortfall/_core.pyx"],
                    include_dirs=[np.get_include()],
                    extra_compile_args=["-O3"],
                )
            ],
            compiler_directives={"language_level": "3"},
        )
    except ImportError:
        ext_modules = []

setup(ext_modules=ext_modules)
