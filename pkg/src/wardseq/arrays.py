"""Dense float64 array kernels and shape/mask validation helpers.

All numeric state in the package lives in plain ``numpy`` arrays:

* matrix      -- 2-d float64, row-major
* tensor3     -- 3-d float64, [batch, time, feature]
* mask matrix -- 2-d bool, [batch, time]; True marks a real step, False a
  padded one, and the True flags of a row form a contiguous suffix
  (left-padding convention)

The helpers below validate those contracts and provide the handful of
kernels everything else builds on. Every kernel is a pure function of its
inputs, so concurrent calls are safe.
"""

from __future__ import annotations

import numpy as np

from .exceptions import ShapeError


def as_matrix(a, name: str = "matrix") -> np.ndarray:
    """Coerce to a 2-d float64 array, raising ShapeError otherwise."""
    out = np.asarray(a, dtype=np.float64)
    if out.ndim != 2:
        raise ShapeError(f"{name}: expected 2 dimensions, got shape {out.shape}")
    return out


def as_tensor3(a, name: str = "tensor") -> np.ndarray:
    """Coerce to a 3-d float64 array [batch, time, feature]."""
    out = np.asarray(a, dtype=np.float64)
    if out.ndim != 3:
        raise ShapeError(f"{name}: expected 3 dimensions, got shape {out.shape}")
    return out


def as_mask(mask, batch: int | None = None, time: int | None = None) -> np.ndarray:
    """Validate a boolean [batch, time] mask with contiguous-suffix rows.

    A row like [False, False, True, True] is valid (left padding); any
    True followed later by False is rejected because downstream layers
    rely on the final step of every sample being real data.
    """
    out = np.asarray(mask)
    if out.dtype != np.bool_:
        raise ShapeError(f"mask: expected bool dtype, got {out.dtype}")
    if out.ndim != 2:
        raise ShapeError(f"mask: expected 2 dimensions, got shape {out.shape}")
    if batch is not None and time is not None and out.shape != (batch, time):
        raise ShapeError(f"mask: shape {out.shape} does not match data ({batch}, {time})")
    if out.shape[1] > 1 and np.any(out[:, :-1] & ~out[:, 1:]):
        raise ShapeError("mask: valid flags must form a contiguous suffix per row")
    if not out.any(axis=1).all():
        raise ShapeError("mask: every sample needs at least one valid step")
    return out


def matmul(a, b) -> np.ndarray:
    """Matrix product with an explicit shape check naming both operands."""
    a = as_matrix(a, "left operand")
    b = as_matrix(b, "right operand")
    if a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul: cannot multiply {a.shape} by {b.shape}")
    return a @ b


def softmax_rows(a) -> np.ndarray:
    """Row-wise softmax, stabilized by subtracting each row's maximum.

    Rows may contain -inf entries (masked attention scores); those get
    weight exactly 0 as long as at least one entry per row is finite.
    """
    a = as_matrix(a)
    shifted = a - np.max(a, axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / np.sum(e, axis=1, keepdims=True)


def sigmoid(x):
    """Numerically stable logistic function, elementwise over any shape."""
    x = np.asarray(x, dtype=np.float64)
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    if out.ndim == 0:
        return float(out)
    return out


def tanh_elem(x):
    """Elementwise hyperbolic tangent (thin alias kept for symmetry)."""
    x = np.asarray(x, dtype=np.float64)
    out = np.tanh(x)
    if out.ndim == 0:
        return float(out)
    return out
