import os

import numpy
from setuptools import Extension, setup

try:
    from Cython.Build import cythonize
except ImportError:  # the pure-Python kernel is used when the extension is absent
    cythonize = None

ext_modules = []
if cythonize is not None and not os.environ.get("TABFIELDS_NO_EXT"):
    ext_modules = cythonize(
        [Extension("tabfields._core", ["src/tabfields/_core.pyx"],
                   include_dirs=[numpy.get_include()],
                   extra_compile_args=["-O3"])],
        language_level=3,
    )

setup(ext_modules=ext_modules)
