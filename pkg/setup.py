"""Build the optional compiled core; the package works without it."""
import os

from setuptools import setup

ext_modules = []
if os.environ.get("HYPGREEN_NO_EXT") != "1":
    try:
        import numpy
        from Cython.Build import cythonize
        from setuptools import Extension

        ext_modules = cythonize(
            [Extension("hypgreen._core", ["src/hypgreen/_core.pyx"], include_dirs=[numpy.get_include()],
                       define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")])],
            compiler_directives={"language_level": 3},
        )
    except ImportError:  # Cython or numpy missing: pure-Python install
        ext_modules = []

setup(ext_modules=ext_modules)
