"""Build script: compiles the autocorrelation kernel extension when Cython
and a C compiler are available; the package falls back to the pure-NumPy
backend otherwise, so a failed extension build is not fatal."""

import os

from setuptools import Extension, setup

ext_modules = []
if os.environ.get("MTDMOM_NO_EXT") != "1":
    try:
        import numpy
        from Cython.Build import cythonize

        ext_modules = cythonize(
            [
                Extension(
                    "mtdmom._ackern",
                    ["src/mtdmom/_ackern.pyx"],
                    include_dirs=[numpy.get_include()],
                    extra_compile_args=["-O3"],
                    define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
                )
            ],
            compiler_directives={
                "language_level": 3,
                "boundscheck": False,
                "wraparound": False,
                "cdivision": True,
                "initializedcheck": False,
            },
        )
    except ImportError:
        ext_modules = []

setup(ext_modules=ext_modules)
