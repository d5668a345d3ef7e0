"""Pure numpy/Python twin of the sparse LDL^T numeric kernel.

Up-looking simplicial LDL^T without pivoting (1x1 pivots only), operating on
the upper triangle of a symmetric matrix in CSC form.  The row pattern of L
is found by walking the elimination tree; the numeric update of column j of
L is vectorized, which keeps the fallback usable (if several times slower
than the compiled twin) on meshes of a few thousand unknowns.
"""

import numpy as np


def ldlt_numeric(n, Ap, Ai, Ax, Lp, parent, Li, Lx, D, drop_tol):
    """Numeric LDL^T factorization.

    Parameters
    ----------
    n : int
        Matrix dimension.
    Ap, Ai, Ax : arrays
        Upper triangle of the (permuted) matrix in CSC form; column k holds
        rows i <= k.
    Lp : int array (n+1,)
        Column pointers of L from the symbolic analysis.
    parent : int array (n,)
        Elimination tree.
    Li, Lx, D : output arrays
        Row indices/values of L (size Lp[n]) and the diagonal of D (size n).
    drop_tol : float
        Absolute pivot magnitude below which the factorization is declared
        broken down.

    Returns
    -------
    int
        -1 on success, otherwise the column index of the offending pivot.
    """
    Y = np.zeros(n)
    flag = np.full(n, -1, dtype=np.int64)
    lnz = np.zeros(n, dtype=np.int64)
    pattern = np.empty(n, dtype=np.int64)

    for k in range(n):
        top = n
        flag[k] = k
        dk = 0.0
        for p in range(Ap[k], Ap[k + 1]):
            i = Ai[p]
            if i == k:
                dk += Ax[p]
                continue
            Y[i] += Ax[p]
            length = 0
            while flag[i] != k:
                pattern[length] = i
                length += 1
                flag[i] = k
                i = parent[i]
            while length > 0:
                length -= 1
                top -= 1
                pattern[top] = pattern[length]

        # pattern[top:n] now holds the row pattern of row k of L in
        # topological (increasing column) order.
        for t in range(top, n):
            i = pattern[t]
            yi = Y[i]
            Y[i] = 0.0
            p1 = Lp[i]
            p2 = p1 + lnz[i]
            idx = Li[p1:p2]
            Y[idx] -= Lx[p1:p2] * yi
            lki = yi / D[i]
            dk -= lki * yi
            Li[p2] = k
            Lx[p2] = lki
            lnz[i] += 1

        if abs(dk) <= drop_tol:
            return k
        D[k] = dk
    return -1


def ldlt_solve(n, Lp, Li, Lx, D, b):
    """Solve L D L^T x = b (in place on a copy of ``b``)."""
    x = np.array(b, dtype=float, copy=True)
    for j in range(n):
        p1, p2 = Lp[j], Lp[j + 1]
        if p2 > p1:
            x[Li[p1:p2]] -= Lx[p1:p2] * x[j]
    x /= D
    for j in range(n - 1, -1, -1):
        p1, p2 = Lp[j], Lp[j + 1]
        if p2 > p1:
            x[j] -= Lx[p1:p2] @ x[Li[p1:p2]]
    return x
