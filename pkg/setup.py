"""Build the optional compiled HEOM kernel; the package works without it."""
import os

from setuptools import setup

ext_modules = []
if os.environ.get("TCLHEOM_NO_EXT", "") != "1":
    try:
        import numpy as np
        from Cython.Build import cythonize
        from setuptools import Extension

        ext_modules = cythonize(
            [Extension(
                "tclheom.heom._kernels_cy",
                ["src/tclheom/heom/_kernels_cy.pyx"],
                include_dirs=[np.get_include()],
                extra_compile_args=["-O3", "-fcx-limited-range"],
            )],
            compiler_directives={"language_level": "3"},
        )
    except ImportError:
        ext_modules = []

setup(ext_modules=ext_modules)
