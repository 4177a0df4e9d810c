"""Dense float64 matrix/vector helpers and a finite-difference gradient checker.

Matrices are plain ``numpy.ndarray`` values (row-major, 64-bit floats).  The
helpers here add the strict shape/finiteness checking the rest of the package
relies on; no implicit broadcasting happens in these entry points.
"""

from __future__ import annotations

from typing import Callable

import numpy as np


class ShapeError(ValueError):
    """Operand dimensions are inconsistent."""


class NonFiniteError(ArithmeticError):
    """A NaN or infinity appeared where a finite value is required."""


def as_matrix(values, rows: int | None = None, cols: int | None = None) -> np.ndarray:
    """Coerce to a 2-D float64 array, optionally checking its shape."""
    a = np.asarray(values, dtype=np.float64)
    if a.ndim != 2:
        raise ShapeError(f"expected a 2-D array, got ndim={a.ndim}")
    if rows is not None and a.shape[0] != rows:
        raise ShapeError(f"expected {rows} rows, got {a.shape[0]}")
    if cols is not None and a.shape[1] != cols:
        raise ShapeError(f"expected {cols} cols, got {a.shape[1]}")
    return np.ascontiguousarray(a)


def as_vector(values, length: int | None = None) -> np.ndarray:
    """Coerce to a 1-D float64 array, optionally checking its length."""
    a = np.asarray(values, dtype=np.float64)
    if a.ndim != 1:
        raise ShapeError(f"expected a 1-D array, got ndim={a.ndim}")
    if length is not None and a.shape[0] != length:
        raise ShapeError(f"expected length {length}, got {a.shape[0]}")
    return np.ascontiguousarray(a)


def require_finite(a: np.ndarray, what: str = "array") -> np.ndarray:
    if not np.all(np.isfinite(a)):
        raise NonFiniteError(f"{what} contains non-finite entries")
    return a


def matmul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Matrix product with explicit dimension checking."""
    a = as_matrix(a)
    b = as_matrix(b)
    if a.shape[1] != b.shape[0]:
        raise ShapeError(f"inner dimensions differ: {a.shape} @ {b.shape}")
    return require_finite(a @ b, "matmul result")


def frob_norm(a: np.ndarray) -> float:
    """Frobenius norm (plain l2 norm for vectors)."""
    return float(np.linalg.norm(np.asarray(a, dtype=np.float64)))


def fd_gradient_check(
    f: Callable[[np.ndarray], float],
    grad: Callable[[np.ndarray], np.ndarray],
    x: np.ndarray,
    h: float = 1e-5,
) -> float:
    """Compare ``grad`` against central differences of ``f`` at ``x``.

    Returns the maximum componentwise relative error, with denominator
    ``max(1, |analytic|)`` so near-zero components are judged absolutely.
    """
    if h <= 0:
        raise ValueError("step h must be positive")
    x = as_vector(x).copy()
    g = as_vector(grad(x), len(x))
    worst = 0.0
    for i in range(len(x)):
        xi = x[i]
        x[i] = xi + h
        fp = float(f(x))
        x[i] = xi - h
        fm = float(f(x))
        x[i] = xi
        if not (np.isfinite(fp) and np.isfinite(fm)):
            raise NonFiniteError(f"objective non-finite near component {i}")
        fd = (fp - fm) / (2.0 * h)
        err = abs(fd - g[i]) / max(1.0, abs(g[i]))
        worst = max(worst, err)
    return worst
