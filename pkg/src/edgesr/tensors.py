"""Dense array math shared by every other module.

Tensors are plain numpy arrays in row-major (C) order. Images are stored
channels x height x width, so the flat offset of (c, y, x) is
((c * H) + y) * W + x. Training runs in float32; tests that rely on finite
differences pass float64 arrays instead, and every function here preserves
the dtype it is given. Scalar reductions always accumulate in float64 so
loss values do not depend on the storage precision.
"""

import numpy as np


class ShapeMismatchError(ValueError):
    """Two operands that must be the same shape are not."""

    def __init__(self, shape_a, shape_b):
        self.shape_a = tuple(shape_a)
        self.shape_b = tuple(shape_b)
        super().__init__(f"shape mismatch: {self.shape_a} vs {self.shape_b}")


def check_same_shape(a, b):
    if a.shape != b.shape:
        raise ShapeMismatchError(a.shape, b.shape)


def add(a, b):
    """Pointwise a + b. b may be a scalar."""
    if isinstance(b, np.ndarray):
        check_same_shape(a, b)
    return a + b


def sub(a, b):
    if isinstance(b, np.ndarray):
        check_same_shape(a, b)
    return a - b


def mul(a, b):
    if isinstance(b, np.ndarray):
        check_same_shape(a, b)
    return a * b


def scale(a, k):
    """a scaled by the constant k."""
    return a * k


def frobenius_sq(a) -> float:
    """Sum of squared entries, accumulated in float64."""
    flat = np.asarray(a, dtype=np.float64).ravel()
    return float(np.sum(flat * flat))


def mean_sq(a, b) -> float:
    """Mean of squared differences over all entries, accumulated in float64."""
    check_same_shape(a, b)
    d = np.asarray(a, dtype=np.float64) - np.asarray(b, dtype=np.float64)
    return float(np.mean(d * d))
