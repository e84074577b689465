import numpy as np
from setuptools import Extension, setup

try:
    from Cython.Build import cythonize

    extensions = cythonize(
        [
            Extension(
                "ocestim._fastrk",
                ["src/ocestim/_fastrk.pyx"],
                include_dirs=[np.get_include()],
            )
        ],
        language_level=3,
    )
except ImportError:
    # Pure-Python fallback in ocestim.odesim covers the missing extension.
    extensions = []

setup(ext_modules=extensions)
