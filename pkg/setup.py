import numpy as np
from setuptools import Extension, setup

try:
    from Cython.Build import cythonize

    ext_modules = cythonize(
        [
            Extension(
                "selfdepth.kernels._core",
                ["src/selfdepth/kernels/_core.pyx"],
                include_dirs=[np.get_include()],
                extra_compile_args=["-O3"],
                optional=True,
            )
        ],
        compiler_directives={"language_level": "3"},
    )
except ImportError:
    # No Cython: the pure-numpy backend is used at runtime.
    ext_modules = []

setup(ext_modules=ext_modules)
