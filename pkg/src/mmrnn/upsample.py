"""Bilinear upsampling of class-probability maps and argmax labeling.

Align-corners convention: source cell centers map onto the corners of
the target grid, so corner values are preserved and a size-preserving
call is the identity. Bilinear weights are convex, hence normalized
inputs stay normalized.
"""

from __future__ import annotations

import numpy as np


def _axis_weights(src: int, dst: int):
    if dst == 1 or src == 1:
        lo = np.zeros(dst, dtype=np.int64)
        return lo, lo.copy(), np.zeros(dst)
    pos = np.arange(dst) * (src - 1) / (dst - 1)
    lo = np.floor(pos).astype(np.int64)
    lo = np.minimum(lo, src - 2)
    return lo, lo + 1, pos - lo


def bilinear_upsample(probmap: np.ndarray, target_h: int, target_w: int) -> np.ndarray:
    """Per-channel align-corners interpolation of an (H, W, B) map."""
    h, w = probmap.shape[:2]
    if target_h < h or target_w < w:
        raise ValueError(f"target {target_h}x{target_w} smaller than source {h}x{w}")
    lo, hi, t = _axis_weights(h, target_h)
    rows = probmap[lo] * (1.0 - t)[:, None, None] + probmap[hi] * t[:, None, None]
    lo, hi, t = _axis_weights(w, target_w)
    return rows[:, lo] * (1.0 - t)[None, :, None] + rows[:, hi] * t[None, :, None]


def argmax_map(probmap: np.ndarray) -> np.ndarray:
    """Per-cell argmax over channels; lowest class index wins ties."""
    if probmap.shape[-1] < 2:
        raise ValueError("need at least 2 classes")
    return np.argmax(probmap, axis=-1)
