import numpy as np
from setuptools import Extension, setup

try:
    from Cython.Build import cythonize

    extensions = cythonize(
        [
            Extension(
                "panelinspect.kernels._fastkern",
                ["src/panelinspect/kernels/_fastkern.pyx"],
                include_dirs=[np.get_include()],
            )
        ],
        language_level=3,
    )
except ImportError:
    # Pure-python fallback in panelinspect.kernels covers every kernel.
    extensions = []

setup(ext_modules=extensions)
