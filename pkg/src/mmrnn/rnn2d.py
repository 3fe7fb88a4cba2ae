"""Single-modality quad-directional 2D RNN: forward, masked loss, BPTT.

Each direction owns a full weight set; the output bias is shared across
directions because it enters the logit sum once. Hidden states are
computed at every cell, labeled or not; validity only gates the loss.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .grid import DIRECTIONS, Direction, PatchGrid, diagonal_index, flip_to_scan
from .linalg import LOG_FLOOR, softmax_rows


@dataclass
class PlaneParams:
    """Per-direction weights: u maps input to hidden, w is the shared
    hidden-to-hidden map over both predecessors, v maps hidden to logits."""

    u: np.ndarray  # (Dh, D)
    w: np.ndarray  # (Dh, Dh)
    v: np.ndarray  # (B, Dh)
    b: np.ndarray  # (Dh,)

    def blocks(self, prefix: str = ""):
        yield prefix + "u", self.u
        yield prefix + "w", self.w
        yield prefix + "v", self.v
        yield prefix + "b", self.b


@dataclass
class SingleModel:
    planes: dict[Direction, PlaneParams]
    c: np.ndarray  # (B,) shared output bias

    def blocks(self):
        for d in DIRECTIONS:
            yield from self.planes[d].blocks(f"{d.name}.")
        yield "c", self.c

    @property
    def dims(self) -> tuple[int, int, int]:
        p = self.planes[Direction.TL]
        return p.u.shape[1], p.u.shape[0], p.v.shape[0]


@dataclass
class SingleCache:
    """Everything the backward pass needs; nothing is recomputed there.

    `hidden` is stored in grid orientation, `pre` and `tilde` in each
    direction's own scan frame (TL orientation after flipping).
    """

    hidden: dict[Direction, np.ndarray]  # (H, W, Dh)
    pre: dict[Direction, np.ndarray]     # (H, W, Dh), scan frame
    tilde: dict[Direction, np.ndarray]   # (H, W, Dh), scan frame
    logits: np.ndarray                   # (H, W, B)
    probs: np.ndarray                    # (H, W, B)


def scan_plane_forward(xf, u, w, b):
    """TL-frame recurrence over one hidden plane.

    `xf` is the feature array already flipped into the scan frame.
    Returns (pre, tilde, h) where tilde is the summed predecessor pair
    and h carries a one-cell zero border at the top and left.
    """
    height, width, _ = xf.shape
    dh = u.shape[0]
    drive = xf.reshape(height * width, -1) @ u.T + b
    drive = drive.reshape(height, width, dh)
    hp = np.zeros((height + 1, width + 1, dh))
    pre = np.empty((height, width, dh))
    tilde = np.empty((height, width, dh))
    for ii, jj in diagonal_index(height, width):
        t = hp[ii, jj + 1] + hp[ii + 1, jj]
        p = drive[ii, jj] + t @ w.T
        tilde[ii, jj] = t
        pre[ii, jj] = p
        hp[ii + 1, jj + 1] = np.maximum(p, 0.0)
    return pre, tilde, hp[1:, 1:]


def scan_plane_backward(gout_f, pre_f, w):
    """Reverse-order error propagation through one plane (TL frame).

    `gout_f` is the direct per-cell error reaching the hidden state,
    already in the scan frame. Returns delta = dL/dpre per cell.
    """
    height, width, dh = pre_f.shape
    dp = np.zeros((height + 1, width + 1, dh))
    for ii, jj in reversed(diagonal_index(height, width)):
        dhid = gout_f[ii, jj] + (dp[ii + 1, jj] + dp[ii, jj + 1]) @ w
        dp[ii, jj] = np.where(pre_f[ii, jj] > 0, dhid, 0.0)
    return dp[:height, :width]


def masked_nll(probs: np.ndarray, g: PatchGrid) -> float:
    """Mean negative log likelihood over valid cells; 0 when none are."""
    n = int(g.valid.sum())
    if n == 0:
        return 0.0
    picked = probs[g.valid, g.labels[g.valid]]
    return float(-np.log(np.maximum(picked, LOG_FLOOR)).sum() / n)


def logit_grad(probs: np.ndarray, g: PatchGrid) -> np.ndarray:
    """dL/dlogits of the masked mean cross entropy: (probs - onehot)/N on
    valid cells, exactly zero elsewhere."""
    n = int(g.valid.sum())
    gp = np.zeros_like(probs)
    if n == 0:
        return gp
    gp[g.valid] = probs[g.valid]
    rows = np.flatnonzero(g.valid.ravel())
    gp.reshape(-1, probs.shape[-1])[rows, g.labels[g.valid]] -= 1.0
    gp /= n
    return gp


def forward_single(model: SingleModel, g: PatchGrid) -> SingleCache:
    """Run all four planes and the softmax output over one grid."""
    d_in, _, b_out = model.dims
    if g.feat_dim != d_in:
        raise ValueError(f"grid feature dim {g.feat_dim} does not match model ({d_in})")
    if g.num_classes != b_out:
        raise ValueError(f"grid classes {g.num_classes} do not match model ({b_out})")
    height, width = g.height, g.width
    hidden, pre, tilde = {}, {}, {}
    logits = np.zeros((height * width, b_out))
    for d in DIRECTIONS:
        p = model.planes[d]
        xf = flip_to_scan(d, g.features)
        pre_f, tilde_f, h_f = scan_plane_forward(xf, p.u, p.w, p.b)
        h = flip_to_scan(d, h_f)
        hidden[d] = h
        pre[d] = pre_f
        tilde[d] = tilde_f
        logits += h.reshape(height * width, -1) @ p.v.T
    logits += model.c
    logits = logits.reshape(height, width, b_out)
    return SingleCache(hidden, pre, tilde, logits, softmax_rows(logits))


def loss_single(probs: np.ndarray, g: PatchGrid) -> float:
    return masked_nll(probs, g)


def zeros_like_single(model: SingleModel) -> SingleModel:
    return SingleModel(
        {d: PlaneParams(*(np.zeros_like(a) for _, a in model.planes[d].blocks()))
         for d in DIRECTIONS},
        np.zeros_like(model.c),
    )


def backward_single(model: SingleModel, g: PatchGrid, cache: SingleCache):
    """Exact gradient of loss_single(forward_single(...)) w.r.t. all params.

    Invalid cells inject no direct error but still relay errors from
    labeled successors through the recurrence.
    """
    height, width = g.height, g.width
    gp = logit_grad(cache.probs, g)
    gp2 = gp.reshape(height * width, -1)
    grads = zeros_like_single(model)
    for d in DIRECTIONS:
        p, gq = model.planes[d], grads.planes[d]
        gout = (gp2 @ p.v).reshape(height, width, -1)
        delta_f = scan_plane_backward(flip_to_scan(d, gout), cache.pre[d], p.w)
        d2 = delta_f.reshape(height * width, -1)
        xf = flip_to_scan(d, g.features)
        gq.u += d2.T @ xf.reshape(height * width, -1)
        gq.w += d2.T @ cache.tilde[d].reshape(height * width, -1)
        gq.b += d2.sum(axis=0)
        gq.v += gp2.T @ cache.hidden[d].reshape(height * width, -1)
    grads.c += gp2.sum(axis=0)
    return grads, loss_single(cache.probs, g)
