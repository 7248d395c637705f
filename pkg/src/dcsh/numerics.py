"""Dense float64 linear algebra helpers for the loss and network modules.

Everything here is a pure function of its inputs. Matrices are numpy
arrays with rows as samples and columns as dimensions; all exported
operations validate shapes and return finite float64 results.
"""

import numpy as np

from .errors import DimensionError, NumericError

# Stabilizer defaults; both are exposed through every caller's signature.
DEFAULT_REG = 1e-4
DEFAULT_CLAMP = 1e-8

SYMMETRY_TOL = 1e-8


def as_matrix(X, name="matrix"):
    """Coerce input to a 2-D float64 array, rejecting non-finite entries."""
    A = np.asarray(X, dtype=np.float64)
    if A.ndim != 2:
        raise DimensionError(f"{name} must be 2-D, got ndim={A.ndim}")
    if not np.all(np.isfinite(A)):
        raise NumericError(f"{name} contains non-finite entries")
    return A


def center_columns(X):
    """Subtract each column's mean. Requires at least 2 rows."""
    A = as_matrix(X, "X")
    if A.shape[0] < 2:
        raise DimensionError(f"need at least 2 rows to center, got {A.shape[0]}")
    return A - A.mean(axis=0, keepdims=True)


def covariance(Xc, Yc, reg=0.0):
    """Cross-covariance of two column-centered views, divisor M-1.

    When both arguments are the same array object the view is being
    correlated with itself and reg is added to the diagonal; cross
    terms never receive the regularizer.
    """
    A = as_matrix(Xc, "Xc")
    B = A if Yc is Xc else as_matrix(Yc, "Yc")
    if A.shape[0] != B.shape[0]:
        raise DimensionError(
            f"row counts differ: {A.shape[0]} vs {B.shape[0]}"
        )
    if A.shape[0] < 2:
        raise DimensionError("covariance needs at least 2 rows")
    if reg < 0:
        raise NumericError(f"reg must be non-negative, got {reg}")
    S = A.T @ B / (A.shape[0] - 1)
    if B is A and reg > 0:
        S = S + reg * np.eye(A.shape[1])
    return S


def inv_sqrt_sym(S, clamp=DEFAULT_CLAMP):
    """Inverse matrix square root of a symmetric matrix.

    Eigenvalues are floored at `clamp` before inversion, so
    rank-deficient inputs are handled without error. The result is
    exactly symmetric.
    """
    A = as_matrix(S, "S")
    if A.shape[0] != A.shape[1]:
        raise DimensionError(f"expected square matrix, got {A.shape}")
    if clamp <= 0:
        raise NumericError(f"clamp must be positive, got {clamp}")
    scale = max(np.abs(A).max(), 1.0)
    if np.abs(A - A.T).max() > SYMMETRY_TOL * scale:
        raise DimensionError("matrix is not symmetric within tolerance")
    lam, Q = np.linalg.eigh(A)
    lam = np.maximum(lam, clamp)
    R = (Q / np.sqrt(lam)) @ Q.T
    return (R + R.T) / 2.0


def thin_svd(A):
    """Thin SVD: A = U @ diag(sigma) @ V.T with sigma non-increasing."""
    M = as_matrix(A, "A")
    U, sigma, Vt = np.linalg.svd(M, full_matrices=False)
    return U, sigma, Vt.T


def fd_gradient(f, X, h=1e-5):
    """Central-difference gradient of a scalar function of a matrix.

    Slow entrywise oracle used to verify analytic gradients; never on
    a hot path.
    """
    A = as_matrix(X, "X")
    if h <= 0:
        raise NumericError(f"step h must be positive, got {h}")
    G = np.empty_like(A)
    P = A.copy()
    for i in range(A.shape[0]):
        for j in range(A.shape[1]):
            orig = P[i, j]
            P[i, j] = orig + h
            f_plus = float(f(P))
            P[i, j] = orig - h
            f_minus = float(f(P))
            P[i, j] = orig
            if not (np.isfinite(f_plus) and np.isfinite(f_minus)):
                err = NumericError(
                    f"non-finite function value at entry ({i}, {j})"
                )
                err.entry = (i, j)
                raise err
            G[i, j] = (f_plus - f_minus) / (2.0 * h)
    return G
