"""Sparse symmetric linear algebra with inertia-reporting LDL^T factorizations.

Two factorization paths sit behind one interface:

* dense Bunch-Kaufman (LAPACK ``dsytrf``) for small systems -- stable on
  indefinite matrices and able to factor singular ones while still
  reporting their inertia;
* a sparse up-looking simplicial LDL^T (no pivoting, RCM ordered) for the
  finite-element systems, with the numeric loop provided by the kernel
  backend.  It raises on effectively-zero pivots instead of returning
  garbage.

Both report the matrix inertia {n_plus, n_minus, n_zero}, which the
monolithic stabilization consumes as a positive-definiteness test.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from scipy.linalg.lapack import get_lapack_funcs
from scipy.sparse.csgraph import reverse_cuthill_mckee

from fracip._kernels import ldlt_numeric, ldlt_solve
from fracip.errors import DimensionMismatch, SingularToWorkingPrecision

__all__ = [
    "Inertia",
    "SparseSymmetric",
    "Factorization",
    "factor",
    "solve",
    "inertia",
    "ZERO_EIGENVALUE_REL",
    "DENSE_CUTOFF",
]

# A pivot with |d| <= ZERO_EIGENVALUE_REL * max|A| counts as a zero eigenvalue.
ZERO_EIGENVALUE_REL = 1e-12

# Below this dimension the dense Bunch-Kaufman path is used by default.
DENSE_CUTOFF = 400


@dataclass(frozen=True)
class Inertia:
    """Eigenvalue sign counts {n_plus, n_minus, n_zero} of a symmetric matrix."""

    n_plus: int
    n_minus: int
    n_zero: int

    @property
    def dimension(self) -> int:
        return self.n_plus + self.n_minus + self.n_zero

    def is_positive_definite(self) -> bool:
        return self.n_minus == 0 and self.n_zero == 0

    def astuple(self) -> tuple[int, int, int]:
        return (self.n_plus, self.n_minus, self.n_zero)


class SparseSymmetric:
    """Symmetric matrix exchanged as a coalesced lower-triangle coordinate list.

    Parameters
    ----------
    dimension : int
        Matrix size (>= 1).
    rows, cols : int arrays
        Coordinates with ``rows >= cols``; duplicates are summed.
    values : float array
        Entry values.
    """

    def __init__(self, dimension, rows, cols, values):
        rows = np.asarray(rows, dtype=np.int64)
        cols = np.asarray(cols, dtype=np.int64)
        values = np.asarray(values, dtype=float)
        if dimension < 1:
            raise DimensionMismatch("dimension must be >= 1")
        if not (rows.shape == cols.shape == values.shape):
            raise DimensionMismatch("rows, cols, values must have equal length")
        if rows.size and (rows.max() >= dimension or cols.max() >= dimension):
            raise DimensionMismatch("index out of range")
        if rows.size and rows.min() < 0 or cols.size and cols.min() < 0:
            raise DimensionMismatch("negative index")
        if np.any(rows < cols):
            raise ValueError("entries must lie in the lower triangle (row >= col)")
        lower = sp.coo_matrix((values, (rows, cols)), shape=(dimension, dimension))
        lower.sum_duplicates()
        self.dimension = int(dimension)
        self._lower = lower.tocoo()

    # -- constructors ------------------------------------------------------
    @classmethod
    def from_dense(cls, a) -> "SparseSymmetric":
        a = np.asarray(a, dtype=float)
        if a.ndim != 2 or a.shape[0] != a.shape[1]:
            raise DimensionMismatch("expected a square matrix")
        r, c = np.tril_indices(a.shape[0])
        v = a[r, c]
        keep = v != 0.0
        if not keep.all() and a.shape[0] > 0:
            # keep explicit zeros on the diagonal so shifts stay cheap
            keep |= r == c
        return cls(a.shape[0], r[keep], c[keep], v[keep])

    @classmethod
    def from_scipy(cls, a) -> "SparseSymmetric":
        """Wrap an assumed-symmetric scipy sparse matrix (lower triangle taken)."""
        lower = sp.tril(a, format="coo")
        return cls(a.shape[0], lower.row, lower.col, lower.data)

    # -- views -------------------------------------------------------------
    @property
    def entries(self):
        """Coalesced (row, col, value) arrays of the lower triangle."""
        return self._lower.row, self._lower.col, self._lower.data

    def to_dense(self) -> np.ndarray:
        full = self.to_csc_full()
        return full.toarray()

    def to_csc_full(self) -> sp.csc_matrix:
        low = self._lower.tocsr()
        strict = sp.tril(low, k=-1)
        return (low + strict.T).tocsc()

    def max_abs(self) -> float:
        data = self._lower.data
        return float(np.max(np.abs(data))) if data.size else 0.0

    def shifted(self, delta: float) -> "SparseSymmetric":
        """Return A + delta * I."""
        r, c, v = self.entries
        n = self.dimension
        rows = np.concatenate([r, np.arange(n)])
        cols = np.concatenate([c, np.arange(n)])
        vals = np.concatenate([v, np.full(n, delta)])
        return SparseSymmetric(n, rows, cols, vals)

    def dump_matrix_market(self, path) -> None:
        """Write the matrix in MatrixMarket symmetric coordinate format."""
        r, c, v = self.entries
        with open(path, "w") as fh:
            fh.write("%%MatrixMarket matrix coordinate real symmetric\n")
            fh.write(f"{self.dimension} {self.dimension} {len(v)}\n")
            for i, j, x in zip(r, c, v):
                fh.write(f"{i + 1} {j + 1} {x!r}\n")


def _inertia_from_diag(d: np.ndarray, zero_tol: float) -> Inertia:
    n_zero = int(np.count_nonzero(np.abs(d) <= zero_tol))
    n_plus = int(np.count_nonzero(d > zero_tol))
    n_minus = int(np.count_nonzero(d < -zero_tol))
    return Inertia(n_plus, n_minus, n_zero)


class Factorization:
    """Opaque LDL^T factors; solves linear systems and reports inertia."""

    def __init__(self, n, inertia_, solve_impl, matvec, singular):
        self.n = n
        self._inertia = inertia_
        self._solve = solve_impl
        self._matvec = matvec
        self._singular = singular

    def inertia(self) -> Inertia:
        return self._inertia

    @property
    def is_singular(self) -> bool:
        return self._singular

    def solve(self, b, refine: bool = True) -> np.ndarray:
        """Solve A x = b.

        One step of iterative refinement is applied by default to hold the
        relative residual near working precision.
        """
        b = np.asarray(b, dtype=float)
        if b.shape[0] != self.n:
            raise DimensionMismatch(f"rhs has length {b.shape[0]}, expected {self.n}")
        if self._singular:
            raise SingularToWorkingPrecision("matrix is singular to working precision")
        x = self._solve(b)
        if refine:
            r = b - self._matvec(x)
            x = x + self._solve(r)
        return x


def _factor_dense(a: SparseSymmetric) -> Factorization:
    n = a.dimension
    dense = a.to_dense()
    sytrf, sytrs = get_lapack_funcs(("sytrf", "sytrs"), (dense,))
    ldu, ipiv, info = sytrf(dense, lower=1)
    if info < 0:
        raise ValueError(f"dsytrf: illegal argument {-info}")

    zero_tol = ZERO_EIGENVALUE_REL * max(a.max_abs(), 1e-300)
    eigs = []
    k = 0
    while k < n:
        if ipiv[k] >= 0:
            eigs.append(ldu[k, k])
            k += 1
        else:
            # 2x2 pivot block [[a, b], [b, c]]
            aa, bb, cc = ldu[k, k], ldu[k + 1, k], ldu[k + 1, k + 1]
            mean = 0.5 * (aa + cc)
            disc = np.hypot(0.5 * (aa - cc), bb)
            eigs.extend([mean - disc, mean + disc])
            k += 2
    iner = _inertia_from_diag(np.asarray(eigs), zero_tol)
    singular = iner.n_zero > 0 or info > 0

    full = a.to_csc_full()

    def solve_impl(b):
        x, sinfo = sytrs(ldu, ipiv, b, lower=1)
        if sinfo != 0:
            raise SingularToWorkingPrecision("dsytrs failed on singular factors")
        return x

    return Factorization(n, iner, solve_impl, lambda x: full @ x, singular)


def _etree_symbolic(n, Ap, Ai):
    """Elimination tree and column pointers of L for an upper-CSC pattern."""
    parent = np.full(n, -1, dtype=np.int64)
    flag = np.full(n, -1, dtype=np.int64)
    lnz = np.zeros(n, dtype=np.int64)
    for k in range(n):
        flag[k] = k
        for p in range(Ap[k], Ap[k + 1]):
            i = Ai[p]
            while i < k and flag[i] != k:
                if parent[i] == -1:
                    parent[i] = k
                lnz[i] += 1
                flag[i] = k
                i = parent[i]
    Lp = np.zeros(n + 1, dtype=np.int64)
    np.cumsum(lnz, out=Lp[1:])
    return parent, Lp


def _factor_sparse(a: SparseSymmetric) -> Factorization:
    n = a.dimension
    full = a.to_csc_full()
    perm = np.asarray(reverse_cuthill_mckee(full.tocsr(), symmetric_mode=True))
    pfull = full[perm][:, perm].tocsc()
    upper = sp.triu(pfull, format="csc")
    upper.sort_indices()

    Ap = upper.indptr.astype(np.int64)
    Ai = upper.indices.astype(np.int64)
    Ax = upper.data.astype(float)
    parent, Lp = _etree_symbolic(n, Ap, Ai)

    Li = np.empty(Lp[n], dtype=np.int64)
    Lx = np.empty(Lp[n], dtype=float)
    D = np.empty(n, dtype=float)
    max_abs = max(a.max_abs(), 1e-300)
    kbad = ldlt_numeric(n, Ap, Ai, Ax, Lp, parent, Li, Lx, D, 1e-14 * max_abs)
    if kbad >= 0:
        raise SingularToWorkingPrecision(
            f"zero pivot at column {kbad} of {n} during sparse LDL^T"
        )
    iner = _inertia_from_diag(D, ZERO_EIGENVALUE_REL * max_abs)

    iperm = np.empty(n, dtype=np.int64)
    iperm[perm] = np.arange(n)

    def solve_impl(b):
        x = ldlt_solve(n, Lp, Li, Lx, D, b[perm])
        return x[iperm]

    return Factorization(n, iner, solve_impl, lambda x: full @ x, False)


def factor(a: SparseSymmetric, method: str = "auto") -> Factorization:
    """Factor a symmetric (possibly indefinite) matrix.

    Parameters
    ----------
    a : SparseSymmetric
        Coalesced lower-triangle input.
    method : {"auto", "dense", "sparse"}
        "auto" picks dense Bunch-Kaufman below ``DENSE_CUTOFF`` unknowns and
        the sparse LDL^T above.  The sparse path raises
        :class:`SingularToWorkingPrecision` when a pivot falls below the
        working-precision threshold; the dense path factors singular
        matrices and defers the error to :meth:`Factorization.solve`.
    """
    if not isinstance(a, SparseSymmetric):
        raise TypeError("factor expects a SparseSymmetric")
    if method == "auto":
        method = "dense" if a.dimension <= DENSE_CUTOFF else "sparse"
    if method == "dense":
        return _factor_dense(a)
    if method == "sparse":
        return _factor_sparse(a)
    raise ValueError(f"unknown method {method!r}")


def solve(f: Factorization, b) -> np.ndarray:
    """Solve A x = b with an existing factorization."""
    return f.solve(b)


def inertia(f: Factorization) -> Inertia:
    """Inertia of the factored matrix."""
    return f.inertia()
