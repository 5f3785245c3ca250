"""Small dense matrix/vector helpers and condition numbers.

Everything here works on plain float64 numpy arrays at small fixed
dimension (the estimator uses n = 4). ``solve``/``invert`` are pivoted
Gaussian elimination written out longhand so their singularity behaviour
is under our control; they serve as the direct-inversion oracle for the
tracked condition number and are never called on the identification hot
path.
"""

from __future__ import annotations

import numpy as np

Mat = np.ndarray
Vec = np.ndarray

# Pivot threshold is relative to the matrix magnitude so detection does not
# depend on overall scaling.
_SINGULAR_REL_TOL = 1e-13


class SingularMatrixError(ArithmeticError):
    """Raised when elimination hits a pivot too small to trust."""


def identity(n: int) -> Mat:
    return np.eye(n, dtype=float)


def zeros(n: int) -> Mat:
    return np.zeros((n, n), dtype=float)


def inf_norm_mat(m: Mat) -> float:
    """Maximum absolute row sum. Zero-size matrices have norm 0."""
    if m.size == 0:
        return 0.0
    return float(np.abs(m).sum(axis=1).max())


def inf_norm_vec(v: Vec) -> float:
    """Maximum absolute entry."""
    if v.size == 0:
        return 0.0
    return float(np.abs(v).max())


def mat_vec(m: Mat, v: Vec) -> Vec:
    return m @ v


def mat_mat(a: Mat, b: Mat) -> Mat:
    return a @ b


def outer(v: Vec, w: Vec) -> Mat:
    return np.outer(v, w)


def transpose(m: Mat) -> Mat:
    return m.T.copy()


def scaled_add(a: np.ndarray, alpha: float, b: np.ndarray) -> np.ndarray:
    """a + alpha * b, elementwise."""
    return a + alpha * b


def solve(a: Mat, b: Vec) -> Vec:
    """Solve a x = b by Gaussian elimination with partial pivoting.

    Inputs are not mutated. Raises SingularMatrixError when the best
    available pivot falls below 1e-13 * inf_norm_mat(a).
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    n = a.shape[0]
    if a.shape != (n, n):
        raise ValueError("matrix must be square")
    if b.shape != (n,):
        raise ValueError("right-hand side has wrong length")

    floor = _SINGULAR_REL_TOL * inf_norm_mat(a)
    aug = np.hstack([a, b[:, None]])
    for col in range(n):
        piv = col + int(np.argmax(np.abs(aug[col:, col])))
        if abs(aug[piv, col]) <= floor:
            raise SingularMatrixError(f"pivot {aug[piv, col]:.3e} below threshold {floor:.3e}")
        if piv != col:
            aug[[col, piv]] = aug[[piv, col]]
        factors = aug[col + 1:, col] / aug[col, col]
        aug[col + 1:, col:] -= factors[:, None] * aug[col, col:]

    x = np.empty(n, dtype=float)
    for row in range(n - 1, -1, -1):
        x[row] = (aug[row, n] - aug[row, row + 1:n] @ x[row + 1:]) / aug[row, row]
    if not np.all(np.isfinite(x)):
        raise SingularMatrixError("solution overflowed")
    return x


def invert(a: Mat) -> Mat:
    """Inverse via column-by-column solves. Oracle use only, small n."""
    a = np.asarray(a, dtype=float)
    n = a.shape[0]
    if a.shape != (n, n):
        raise ValueError("matrix must be square")
    out = np.empty((n, n), dtype=float)
    eye = np.eye(n)
    for j in range(n):
        out[:, j] = solve(a, eye[:, j])
    return out


def condition_number_direct(a: Mat) -> float:
    """Infinity-norm condition number computed with an explicit inverse.

    Propagates SingularMatrixError; callers treat that as kappa = inf.
    """
    return inf_norm_mat(a) * inf_norm_mat(invert(a))
