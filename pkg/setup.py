"""Optional Cython build of ``modresp._kernels``.

A failed or skipped build leaves the package usable through the NumPy
fallback selected in ``modresp.kernels``.
"""
from setuptools import Extension, setup

try:
    import numpy as np
    from Cython.Build import cythonize
except ImportError:
    ext_modules = []
else:
    ext_modules = cythonize(
        [
            Extension(
                "modresp._kernels",
                ["src/modresp/_kernels.pyx"],
                include_dirs=[np.get_include()],
                extra_compile_args=["-O3"],
                optional=True,
            )
        ],
        compiler_directives={"language_level": "3"},
    )

setup(ext_modules=ext_modules)
