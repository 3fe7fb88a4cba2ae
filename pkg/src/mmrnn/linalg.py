"""Dense float64 kernels every other module is built on.

Vectors are 1-D float64 arrays and matrices are 2-D float64 arrays.
All operations are pure: inputs are never mutated, so everything here
is safe to call concurrently.
"""

from __future__ import annotations

import copy

import numpy as np

# Relative slack on the clip comparison so that re-clipping an already
# clipped gradient is an exact no-op despite rounding in the rescale.
_CLIP_SLACK = 1e-12

# Floor for log arguments in cross-entropy terms. Softmax output can not
# actually reach zero, but callers may pass arbitrary distributions.
LOG_FLOOR = 1e-300


def matvec(m: np.ndarray, v: np.ndarray) -> np.ndarray:
    """Matrix-vector product with explicit shape checking."""
    m = np.asarray(m, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    if m.ndim != 2 or v.ndim != 1 or m.shape[1] != v.shape[0]:
        raise ValueError(f"matvec shape mismatch: {m.shape} x {v.shape}")
    return m @ v


def outer(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Outer product a b^T with shape (len(a), len(b))."""
    return np.outer(np.asarray(a, dtype=np.float64), np.asarray(b, dtype=np.float64))


def relu(v: np.ndarray) -> np.ndarray:
    return np.maximum(np.asarray(v, dtype=np.float64), 0.0)


def relu_grad(pre: np.ndarray) -> np.ndarray:
    """Subgradient of relu at the pre-activation; exactly-zero inputs give 0."""
    return (np.asarray(pre) > 0).astype(np.float64)


def softmax(v: np.ndarray) -> np.ndarray:
    """Overflow-safe softmax of a single vector."""
    v = np.asarray(v, dtype=np.float64)
    e = np.exp(v - v.max())
    return e / e.sum()


def softmax_rows(z: np.ndarray) -> np.ndarray:
    """Row-wise overflow-safe softmax over the last axis."""
    z = np.asarray(z, dtype=np.float64)
    e = np.exp(z - z.max(axis=-1, keepdims=True))
    return e / e.sum(axis=-1, keepdims=True)


def global_norm(tree) -> float:
    """L2 norm over every parameter block of a model-shaped container."""
    ss = 0.0
    for _, block in tree.blocks():
        flat = block.ravel()
        ss += float(flat @ flat)
    return float(np.sqrt(ss))


def global_norm_clip(grads, threshold: float):
    """Rescale all blocks jointly so the global L2 norm is <= threshold.

    Returns the input object unchanged when it is already within the
    threshold, otherwise a uniformly scaled copy (direction preserved).
    """
    if threshold <= 0:
        raise ValueError(f"clip threshold must be positive, got {threshold}")
    n = global_norm(grads)
    if n <= threshold * (1.0 + _CLIP_SLACK):
        return grads
    scale = threshold / n
    clipped = copy.deepcopy(grads)
    for _, block in clipped.blocks():
        block *= scale
    return clipped
