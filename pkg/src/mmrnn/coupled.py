"""Two quad-directional 2D RNNs cross-connected by transfer layers.

Each modality keeps its own recurrence; at every cell the pre-activation
additionally receives the other modality's predecessor hidden states
through a learned transfer matrix `s` (shared over both predecessors,
like `w`). The coupling is strictly causal: cross terms read only
predecessor cells, never the same cell, so the two modalities can be
advanced in either order along a wavefront.

Backward modes:
  FULL   exact gradient; hidden errors flow back within a modality and
         across modalities (a hidden state feeds the other modality's
         future states through that modality's transfer matrix).
  PAPER  drops the cross-modality error terms in the hidden recursion,
         kept to quantify their effect; parameter formulas are otherwise
         identical.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .grid import DIRECTIONS, Direction, PatchGrid, check_pair, diagonal_index, flip_to_scan
from .linalg import softmax_rows
from .rnn2d import logit_grad, masked_nll

FULL = "full"
PAPER = "paper"
BACKWARD_MODES = (FULL, PAPER)

MODALITIES = ("c", "d")


@dataclass
class CoupledPlaneParams:
    """Per-direction weights of one modality, plus the transfer matrix `s`
    mapping the other modality's hidden space into this one."""

    u: np.ndarray  # (Dh, D_m)
    w: np.ndarray  # (Dh, Dh)
    s: np.ndarray  # (Dh, Dh)
    v: np.ndarray  # (B, Dh)
    b: np.ndarray  # (Dh,)

    def blocks(self, prefix: str = ""):
        yield prefix + "u", self.u
        yield prefix + "w", self.w
        yield prefix + "s", self.s
        yield prefix + "v", self.v
        yield prefix + "b", self.b


@dataclass
class ModalityParams:
    planes: dict[Direction, CoupledPlaneParams]
    c_bias: np.ndarray  # (B,)

    def blocks(self, prefix: str = ""):
        for d in DIRECTIONS:
            yield from self.planes[d].blocks(f"{prefix}{d.name}.")
        yield prefix + "c_bias", self.c_bias


@dataclass
class MultimodalModel:
    modality_c: ModalityParams
    modality_d: ModalityParams

    def blocks(self):
        yield from self.modality_c.blocks("c.")
        yield from self.modality_d.blocks("d.")

    def modality(self, tag: str) -> ModalityParams:
        return self.modality_c if tag == "c" else self.modality_d

    @property
    def dims(self) -> tuple[int, int, int, int]:
        pc = self.modality_c.planes[Direction.TL]
        pd = self.modality_d.planes[Direction.TL]
        return pc.u.shape[1], pd.u.shape[1], pc.u.shape[0], pc.v.shape[0]


# A Gradients value is just a zeroed structural mirror of the model.
Gradients = MultimodalModel


def zeros_model(d_c: int, d_d: int, d_hidden: int, num_classes: int) -> MultimodalModel:
    def modality(d_in):
        return ModalityParams(
            {d: CoupledPlaneParams(
                np.zeros((d_hidden, d_in)),
                np.zeros((d_hidden, d_hidden)),
                np.zeros((d_hidden, d_hidden)),
                np.zeros((num_classes, d_hidden)),
                np.zeros(d_hidden),
            ) for d in DIRECTIONS},
            np.zeros(num_classes),
        )

    return MultimodalModel(modality(d_c), modality(d_d))


def zeros_like_model(model: MultimodalModel) -> Gradients:
    return zeros_model(*model.dims)


@dataclass
class PlaneCache:
    """One direction of one modality. `hidden` is in grid orientation;
    the rest stays in the scan frame the backward pass walks."""

    hidden: np.ndarray       # (H, W, Dh)
    pre: np.ndarray          # (H, W, Dh), scan frame
    tilde_own: np.ndarray    # (H, W, Dh), scan frame
    tilde_cross: np.ndarray  # (H, W, Dh), scan frame


@dataclass
class ForwardCache:
    planes: dict[str, dict[Direction, PlaneCache]]  # by modality tag
    logits: dict[str, np.ndarray]                   # (H, W, B)
    probs: dict[str, np.ndarray]                    # (H, W, B)


def _coupled_plane_forward(xc_f, xd_f, pc: CoupledPlaneParams, pd: CoupledPlaneParams):
    """Advance both modalities along one direction's wavefront.

    Own-modality terms are summed first and the cross term is added
    afterwards, so a zero transfer matrix reproduces the uncoupled plane
    arithmetic exactly.
    """
    height, width, _ = xc_f.shape
    dh = pc.u.shape[0]
    drive_c = (xc_f.reshape(height * width, -1) @ pc.u.T + pc.b).reshape(height, width, dh)
    drive_d = (xd_f.reshape(height * width, -1) @ pd.u.T + pd.b).reshape(height, width, dh)
    hpc = np.zeros((height + 1, width + 1, dh))
    hpd = np.zeros((height + 1, width + 1, dh))
    out = {
        "c": (np.empty((height, width, dh)), np.empty((height, width, dh)), np.empty((height, width, dh))),
        "d": (np.empty((height, width, dh)), np.empty((height, width, dh)), np.empty((height, width, dh))),
    }
    pre_c, til_c, crs_c = out["c"]
    pre_d, til_d, crs_d = out["d"]
    for ii, jj in diagonal_index(height, width):
        tc = hpc[ii, jj + 1] + hpc[ii + 1, jj]
        td = hpd[ii, jj + 1] + hpd[ii + 1, jj]
        p_c = drive_c[ii, jj] + tc @ pc.w.T + td @ pc.s.T
        p_d = drive_d[ii, jj] + td @ pd.w.T + tc @ pd.s.T
        til_c[ii, jj] = tc
        crs_c[ii, jj] = td
        pre_c[ii, jj] = p_c
        til_d[ii, jj] = td
        crs_d[ii, jj] = tc
        pre_d[ii, jj] = p_d
        hpc[ii + 1, jj + 1] = np.maximum(p_c, 0.0)
        hpd[ii + 1, jj + 1] = np.maximum(p_d, 0.0)
    return out, hpc[1:, 1:], hpd[1:, 1:]


def forward_coupled(model: MultimodalModel, g_c: PatchGrid, g_d: PatchGrid) -> ForwardCache:
    """Forward pass over a mask-aligned grid pair; retains everything the
    backward pass needs."""
    check_pair(g_c, g_d)
    d_c, d_d, _, b_out = model.dims
    if g_c.feat_dim != d_c or g_d.feat_dim != d_d:
        raise ValueError(
            f"feature dims ({g_c.feat_dim}, {g_d.feat_dim}) do not match model ({d_c}, {d_d})"
        )
    if g_c.num_classes != b_out:
        raise ValueError(f"grid classes {g_c.num_classes} do not match model ({b_out})")
    height, width = g_c.height, g_c.width
    planes: dict[str, dict[Direction, PlaneCache]] = {"c": {}, "d": {}}
    z = {m: np.zeros((height * width, b_out)) for m in MODALITIES}
    feats = {"c": g_c.features, "d": g_d.features}
    for d in DIRECTIONS:
        pc = model.modality_c.planes[d]
        pd = model.modality_d.planes[d]
        xc_f = flip_to_scan(d, feats["c"])
        xd_f = flip_to_scan(d, feats["d"])
        cached, hc_f, hd_f = _coupled_plane_forward(xc_f, xd_f, pc, pd)
        for tag, h_f, params in (("c", hc_f, pc), ("d", hd_f, pd)):
            pre, tilde, cross = cached[tag]
            h = flip_to_scan(d, h_f)
            planes[tag][d] = PlaneCache(h, pre, tilde, cross)
            z[tag] += h.reshape(height * width, -1) @ params.v.T
    logits, probs = {}, {}
    for tag in MODALITIES:
        z[tag] += model.modality(tag).c_bias
        logits[tag] = z[tag].reshape(height, width, b_out)
        probs[tag] = softmax_rows(logits[tag])
    return ForwardCache(planes, logits, probs)


def loss_coupled(cache: ForwardCache, g_c: PatchGrid, g_d: PatchGrid) -> float:
    """Summed masked cross entropy of both modalities, averaged over the
    shared count of valid cells (not twice that count)."""
    return masked_nll(cache.probs["c"], g_c) + masked_nll(cache.probs["d"], g_d)


def _coupled_plane_backward(gout_c_f, gout_d_f, plane_c: PlaneCache, plane_d: PlaneCache,
                            pc: CoupledPlaneParams, pd: CoupledPlaneParams, mode: str):
    height, width, dh = plane_c.pre.shape
    dpc = np.zeros((height + 1, width + 1, dh))
    dpd = np.zeros((height + 1, width + 1, dh))
    for ii, jj in reversed(diagonal_index(height, width)):
        succ_c = dpc[ii + 1, jj] + dpc[ii, jj + 1]
        succ_d = dpd[ii + 1, jj] + dpd[ii, jj + 1]
        dh_c = gout_c_f[ii, jj] + succ_c @ pc.w
        dh_d = gout_d_f[ii, jj] + succ_d @ pd.w
        if mode == FULL:
            dh_c = dh_c + succ_d @ pd.s
            dh_d = dh_d + succ_c @ pc.s
        dpc[ii, jj] = np.where(plane_c.pre[ii, jj] > 0, dh_c, 0.0)
        dpd[ii, jj] = np.where(plane_d.pre[ii, jj] > 0, dh_d, 0.0)
    return dpc[:height, :width], dpd[:height, :width]


def backward_coupled(model: MultimodalModel, g_c: PatchGrid, g_d: PatchGrid,
                     cache: ForwardCache, mode: str = FULL):
    """BPTT through both networks in reverse scan order per direction.

    Returns (gradients, loss). Masked cells contribute no direct logit
    error yet still relay indirect error to their neighbors.
    """
    if mode not in BACKWARD_MODES:
        raise ValueError(f"unknown backward mode {mode!r}")
    height, width = g_c.height, g_c.width
    hw = height * width
    grids = {"c": g_c, "d": g_d}
    grads = zeros_like_model(model)
    gp2 = {}
    for tag in MODALITIES:
        gp = logit_grad(cache.probs[tag], grids[tag])
        gp2[tag] = gp.reshape(hw, -1)
        grads.modality(tag).c_bias += gp2[tag].sum(axis=0)
    for d in DIRECTIONS:
        pc = model.modality_c.planes[d]
        pd = model.modality_d.planes[d]
        plane_c = cache.planes["c"][d]
        plane_d = cache.planes["d"][d]
        gout = {}
        for tag, params in (("c", pc), ("d", pd)):
            gout[tag] = flip_to_scan(d, (gp2[tag] @ params.v).reshape(height, width, -1))
        delta_c, delta_d = _coupled_plane_backward(gout["c"], gout["d"], plane_c, plane_d, pc, pd, mode)
        for tag, delta, plane in (("c", delta_c, plane_c), ("d", delta_d, plane_d)):
            gq = grads.modality(tag).planes[d]
            d2 = delta.reshape(hw, -1)
            xf = flip_to_scan(d, grids[tag].features)
            gq.u += d2.T @ xf.reshape(hw, -1)
            gq.w += d2.T @ plane.tilde_own.reshape(hw, -1)
            gq.s += d2.T @ plane.tilde_cross.reshape(hw, -1)
            gq.b += d2.sum(axis=0)
            gq.v += gp2[tag].T @ plane.hidden.reshape(hw, -1)
    return grads, loss_coupled(cache, g_c, g_d)


def fused_probs(cache: ForwardCache) -> np.ndarray:
    """Arithmetic mean of the two modalities' class distributions."""
    return (cache.probs["c"] + cache.probs["d"]) / 2.0


def predict_labels(cache: ForwardCache) -> np.ndarray:
    """Per-cell argmax of the fused distribution, lowest index on ties.
    All cells are labeled, including invalid ones."""
    return np.argmax(fused_probs(cache), axis=-1)
