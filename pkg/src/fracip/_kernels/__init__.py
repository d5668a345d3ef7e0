"""Kernel backend selection.

The hot inner loops (per-element integration and the sparse LDL^T numeric
factorization) exist twice: a compiled Cython extension and a pure
numpy/Python twin.  The compiled version is preferred when it was built;
setting ``FRACIP_PURE_PYTHON=1`` forces the fallback (used by the test
suite and the kernel benchmark to compare both).
"""

import os

from fracip._kernels import elem_py, ldlt_py

_force_python = os.environ.get("FRACIP_PURE_PYTHON", "") == "1"

if not _force_python:
    try:
        from fracip._kernels import elem_cy as _elem
        from fracip._kernels import ldlt_cy as _ldlt

        _backend = "cython"
    except ImportError:
        _elem, _ldlt = elem_py, ldlt_py
        _backend = "python"
else:
    _elem, _ldlt = elem_py, ldlt_py
    _backend = "python"


def kernel_backend() -> str:
    """Name of the active kernel backend ("cython" or "python")."""
    return _backend


def get_kernels(backend: str | None = None):
    """Return the (element, ldlt) kernel modules for ``backend`` (default: active)."""
    if backend is None:
        return _elem, _ldlt
    if backend == "python":
        return elem_py, ldlt_py
    if backend == "cython":
        from fracip._kernels import elem_cy, ldlt_cy

        return elem_cy, ldlt_cy
    raise ValueError(f"unknown kernel backend: {backend!r}")


elem_kernel = _elem.elem_kernel
ldlt_numeric = _ldlt.ldlt_numeric
ldlt_solve = _ldlt.ldlt_solve
