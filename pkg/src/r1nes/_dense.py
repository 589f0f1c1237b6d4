"""Plain-Python dense linear algebra on lists of lists.

These routines are deliberately naive. They exist for two reasons:

* The validation oracles must be independent of the O(d) closed forms they
  check, so they cannot reuse any of the fast paths (or the library routines
  those paths are tested against elsewhere).
* The full-covariance baseline's per-generation cost should reflect genuine
  O(d^3) arithmetic. BLAS-backed matmuls at d <= 64 are dominated by dispatch
  overhead, which hides the cubic growth the baseline is there to demonstrate.

Matrices are lists of row lists of floats; vectors are lists of floats.
Intended for d <= 64 in the baseline and d <= 16 in oracles.
"""

from __future__ import annotations

import math


def zeros(n: int, m: int) -> list[list[float]]:
    return [[0.0] * m for _ in range(n)]


def eye(n: int) -> list[list[float]]:
    out = zeros(n, n)
    for i in range(n):
        out[i][i] = 1.0
    return out


def transpose(a: list[list[float]]) -> list[list[float]]:
    return [list(col) for col in zip(*a)]


def matmul(a: list[list[float]], b: list[list[float]]) -> list[list[float]]:
    """C = A B, ikj loop order so the inner loop runs over one cached row."""
    n, inner, m = len(a), len(b), len(b[0])
    if len(a[0]) != inner:
        raise ValueError(f"matmul shapes ({n},{len(a[0])}) x ({inner},{m})")
    out = zeros(n, m)
    for i in range(n):
        ai = a[i]
        oi = out[i]
        for k in range(inner):
            aik = ai[k]
            if aik == 0.0:
                continue
            bk = b[k]
            for j in range(m):
                oi[j] += aik * bk[j]
    return out


def matvec(a: list[list[float]], x: list[float]) -> list[float]:
    if len(a[0]) != len(x):
        raise ValueError(f"matvec shapes ({len(a)},{len(a[0])}) x ({len(x)},)")
    out = [0.0] * len(a)
    for i, ai in enumerate(a):
        s = 0.0
        for k, xk in enumerate(x):
            s += ai[k] * xk
        out[i] = s
    return out


def mat_add(a: list[list[float]], b: list[list[float]]) -> list[list[float]]:
    return [[x + y for x, y in zip(ra, rb)] for ra, rb in zip(a, b)]


def mat_scale(a: list[list[float]], s: float) -> list[list[float]]:
    return [[s * x for x in row] for row in a]


def norm_inf(a: list[list[float]]) -> float:
    return max(sum(abs(x) for x in row) for row in a)


def _lu_decompose(a: list[list[float]]) -> tuple[list[list[float]], list[int], int]:
    """In-place-style LU with partial pivoting on a copy.

    Returns (packed LU, pivot row order, sign of the permutation).
    """
    n = len(a)
    lu = [row[:] for row in a]
    piv = list(range(n))
    sign = 1
    for col in range(n):
        p = max(range(col, n), key=lambda r: abs(lu[r][col]))
        if lu[p][col] == 0.0:
            raise ValueError("singular matrix")
        if p != col:
            lu[p], lu[col] = lu[col], lu[p]
            piv[p], piv[col] = piv[col], piv[p]
            sign = -sign
        pivot = lu[col][col]
        for r in range(col + 1, n):
            f = lu[r][col] / pivot
            lu[r][col] = f
            lur = lu[r]
            luc = lu[col]
            for c in range(col + 1, n):
                lur[c] -= f * luc[c]
    return lu, piv, sign


def solve(a: list[list[float]], b: list[float]) -> list[float]:
    """Solve A x = b by LU with partial pivoting."""
    n = len(a)
    lu, piv, _ = _lu_decompose(a)
    x = [b[piv[i]] for i in range(n)]
    for i in range(n):
        for k in range(i):
            x[i] -= lu[i][k] * x[k]
    for i in range(n - 1, -1, -1):
        for k in range(i + 1, n):
            x[i] -= lu[i][k] * x[k]
        x[i] /= lu[i][i]
    return x


def inverse(a: list[list[float]]) -> list[list[float]]:
    n = len(a)
    lu, piv, _ = _lu_decompose(a)
    inv_cols = []
    for j in range(n):
        e = [0.0] * n
        e[j] = 1.0
        x = [e[piv[i]] for i in range(n)]
        for i in range(n):
            for k in range(i):
                x[i] -= lu[i][k] * x[k]
        for i in range(n - 1, -1, -1):
            for k in range(i + 1, n):
                x[i] -= lu[i][k] * x[k]
            x[i] /= lu[i][i]
        inv_cols.append(x)
    return transpose(inv_cols)


def det(a: list[list[float]]) -> float:
    try:
        lu, _, sign = _lu_decompose(a)
    except ValueError:
        return 0.0
    out = float(sign)
    for i in range(len(a)):
        out *= lu[i][i]
    return out


def cholesky(a: list[list[float]]) -> list[list[float]]:
    """Lower-triangular L with L L^T = A. Raises on a non-PD input."""
    n = len(a)
    low = zeros(n, n)
    for i in range(n):
        for j in range(i + 1):
            s = a[i][j]
            for k in range(j):
                s -= low[i][k] * low[j][k]
            if i == j:
                if not (s > 0.0):
                    raise ValueError(f"matrix not positive definite at pivot {i}")
                low[i][j] = math.sqrt(s)
            else:
                low[i][j] = s / low[j][j]
    return low


def eig_sym(a: list[list[float]], tol: float = 1e-14, max_sweeps: int = 64) -> tuple[list[float], list[list[float]]]:
    """Eigenvalues/vectors of a symmetric matrix by cyclic Jacobi rotations.

    Returns (eigenvalues ascending, matrix whose columns are eigenvectors).
    """
    n = len(a)
    m = [row[:] for row in a]
    vecs = eye(n)
    for _ in range(max_sweeps):
        off = math.sqrt(sum(m[i][j] ** 2 for i in range(n) for j in range(n) if i != j))
        scale = math.sqrt(sum(m[i][j] ** 2 for i in range(n) for j in range(n)))
        if off <= tol * max(scale, 1e-300):
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                if m[p][q] == 0.0:
                    continue
                theta = (m[q][q] - m[p][p]) / (2.0 * m[p][q])
                t = math.copysign(1.0, theta) / (abs(theta) + math.sqrt(theta * theta + 1.0))
                c = 1.0 / math.sqrt(t * t + 1.0)
                s = t * c
                for k in range(n):
                    mkp, mkq = m[k][p], m[k][q]
                    m[k][p] = c * mkp - s * mkq
                    m[k][q] = s * mkp + c * mkq
                for k in range(n):
                    mpk, mqk = m[p][k], m[q][k]
                    m[p][k] = c * mpk - s * mqk
                    m[q][k] = s * mpk + c * mqk
                for k in range(n):
                    vkp, vkq = vecs[k][p], vecs[k][q]
                    vecs[k][p] = c * vkp - s * vkq
                    vecs[k][q] = s * vkp + c * vkq
    vals = [m[i][i] for i in range(n)]
    order = sorted(range(n), key=lambda i: vals[i])
    vals_sorted = [vals[i] for i in order]
    vecs_sorted = [[vecs[r][i] for i in order] for r in range(n)]
    return vals_sorted, vecs_sorted


def expm(a: list[list[float]]) -> list[list[float]]:
    """Matrix exponential by scaling-and-squaring with a Taylor series.

    The input is scaled down until its inf-norm is <= 0.5, then a fixed
    24-term series is applied and squared back up. At norm 0.5 term 24 is
    below 1e-25 relative, so the fixed order is exact to double precision
    for any input; keeping the order fixed also keeps the cost a function
    of the matrix size alone.
    """
    n = len(a)
    nrm = norm_inf(a)
    j = 0
    if nrm > 0.5:
        j = max(0, int(math.ceil(math.log2(nrm / 0.5))))
    b = mat_scale(a, 0.5 ** j)
    result = eye(n)
    term = eye(n)
    for k in range(1, 25):
        term = mat_scale(matmul(term, b), 1.0 / k)
        result = mat_add(result, term)
    for _ in range(j):
        result = matmul(result, result)
    return result
