"""Build the optional Cython kernels.

The package works without them: ``cdpnes._backend`` falls back to the numpy
implementation in ``cdpnes._pykernels`` when the extension is missing.
"""
import os

from setuptools import setup

ext_modules = []
if not os.environ.get("CDPNES_NO_EXT"):
    try:
        import numpy as np
        from Cython.Build import cythonize
        from setuptools import Extension
    except ImportError:
        pass
    else:
        ext_modules = cythonize(
            [
                Extension(
                    "cdpnes._ckernels",
                    ["src/cdpnes/_ckernels.pyx"],
                    include_dirs=[np.get_include()],
                    extra_compile_args=["-O3"],
                    define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
                )
            ],
            compiler_directives={
                "language_level": "3",
                "boundscheck": False,
                "wraparound": False,
                "cdivision": True,
            },
        )

setup(ext_modules=ext_modules)
