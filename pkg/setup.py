import os

from setuptools import Extension, setup

# The compiled kernels are optional; the package falls back to pure Python.
ext_modules = []
if os.environ.get("DYNREASON_NO_EXT") != "1":
    try:
        from Cython.Build import cythonize
    except ImportError:
        cythonize = None
    if cythonize is not None:
        extensions = [
            Extension(
                "dynreason._kernels",
                ["src/dynreason/_kernels.pyx"],
                # no -ffast-math, fp contraction or sincos fusion: results must match the
                # pure-Python kernels bit for bit
                extra_compile_args=["-O2", "-ffp-contract=off", "-fno-builtin"],
            )
        ]
        ext_modules = cythonize(
            extensions,
            compiler_directives={
                "language_level": "3",
                "boundscheck": False,
                "wraparound": False,
                "cdivision": True,
            },
        )

setup(ext_modules=ext_modules)
