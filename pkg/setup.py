"""Build script for the optional compiled ray-cast kernel.

The package works without the extension: teletwin.raycast falls back to the
vectorized numpy kernel when the compiled module is absent.
"""

from setuptools import Extension, setup

try:
    import numpy
    from Cython.Build import cythonize

    ext_modules = cythonize(
        [
            Extension(
                "teletwin._raycast_cy",
                ["src/teletwin/_raycast_cy.pyx"],
                include_dirs=[numpy.get_include()],
                extra_compile_args=["-O3"],
            )
        ],
        compiler_directives={"language_level": "3"},
    )
except ImportError:
    ext_modules = []

setup(ext_modules=ext_modules)
