"""Build script for the optional Cython kernel extensions.

The package is fully functional without the compiled extensions (a pure
numpy/Python fallback is selected at import time); building them just makes
the hot loops faster.  ``optional=True`` keeps installation working on
systems without a C toolchain.
"""

import numpy as np
from setuptools import Extension, setup

try:
    from Cython.Build import cythonize
except ImportError:
    ext_modules = []
else:
    extensions = [
        Extension(
            "fracip._kernels.elem_cy",
            ["src/fracip/_kernels/elem_cy.pyx"],
            include_dirs=[np.get_include()],
            extra_compile_args=["-O3"],
            optional=True,
        ),
        Extension(
            "fracip._kernels.ldlt_cy",
            ["src/fracip/_kernels/ldlt_cy.pyx"],
            include_dirs=[np.get_include()],
            extra_compile_args=["-O3"],
            optional=True,
        ),
    ]
    ext_modules = cythonize(
        extensions,
        compiler_directives={"language_level": "3", "boundscheck": False, "wraparound": False},
    )

setup(ext_modules=ext_modules)
