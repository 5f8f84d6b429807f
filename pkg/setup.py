from setuptools import setup, Extension

import numpy

try:
    from Cython.Build import cythonize

    ext_modules = cythonize(
        [
            Extension(
                "siggm.wglasso._direction_fast",
                ["src/siggm/wglasso/_direction_fast.pyx"],
                include_dirs=[numpy.get_include()],
                define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
            )
        ],
        compiler_directives={"language_level": "3"},
    )
except ImportError:
    # No Cython: the package still works through the pure-python kernel.
    ext_modules = []

setup(ext_modules=ext_modules)
