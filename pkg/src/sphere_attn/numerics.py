"""Dense linear-algebra primitives and the finite-difference reference.

Production paths run in float32, verification paths in float64; every
function here works with either.  The finite-difference gradient is the
slow, trustworthy side of the gradient checks and must stay independent
of the analytic code it is used to verify.
"""

from __future__ import annotations

from typing import Callable

import numpy as np

from .errors import NumericError, ShapeError


def matmul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Matrix product of two 2-D arrays.

    Thin wrapper over the BLAS-backed ``@`` that enforces the 2-D shape
    contract instead of silently broadcasting, and rejects non-finite
    results.
    """
    a = np.asarray(a)
    b = np.asarray(b)
    if a.ndim != 2 or b.ndim != 2:
        raise ShapeError(f"matmul expects 2-D operands, got {a.ndim}-D and {b.ndim}-D")
    if a.shape[1] != b.shape[0]:
        raise ShapeError(f"inner dimensions do not match: {a.shape} @ {b.shape}")
    with np.errstate(over="ignore", invalid="ignore"):
        out = a @ b
    if not np.all(np.isfinite(out)):
        raise NumericError("matmul produced non-finite entries")
    return out


def row_softmax(m: np.ndarray) -> np.ndarray:
    """Softmax along the last axis, stabilized by subtracting the row max.

    Rows of the result are nonnegative and sum to 1.  The shift makes the
    largest exponent exactly 0, so extreme logits (|x| around 1e4) cannot
    overflow.
    """
    m = np.asarray(m)
    shifted = m - np.max(m, axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / np.sum(e, axis=-1, keepdims=True)


def finite_difference_gradient(
    f: Callable[[np.ndarray], float], x: np.ndarray, eps: float = 1e-5
) -> np.ndarray:
    """Central-difference gradient of a scalar function of a flat vector.

    Evaluates (f(x + eps*e_i) - f(x - eps*e_i)) / (2*eps) one coordinate at
    a time: 2*len(x) function evaluations, O(eps^2) truncation error.
    """
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1:
        raise ShapeError(f"x must be a flat parameter vector, got {x.ndim}-D")
    if not eps > 0:
        raise ValueError(f"eps must be positive, got {eps}")
    grad = np.zeros_like(x)
    for i in range(x.size):
        step = np.zeros_like(x)
        step[i] = eps
        f_plus = float(f(x + step))
        f_minus = float(f(x - step))
        if not (np.isfinite(f_plus) and np.isfinite(f_minus)):
            raise NumericError(f"non-finite function value while perturbing coordinate {i}")
        grad[i] = (f_plus - f_minus) / (2.0 * eps)
    return grad
