"""Build script for the optional compiled Hamming kernel.

The package is fully functional without the extension; retrieval then runs
on the numpy fallback selected at import time (see dcsh.kernels).
"""

from setuptools import Extension, setup

try:
    import numpy as np
    from Cython.Build import cythonize

    ext_modules = cythonize(
        [
            Extension(
                "dcsh._hammingx",
                ["src/dcsh/_hammingx.pyx"],
                include_dirs=[np.get_include()],
            )
        ],
        compiler_directives={"language_level": "3"},
    )
except ImportError:
    ext_modules = []

setup(ext_modules=ext_modules)
