"""The fusion ablation family: single-modality, input-, hidden- and
classifier-level fusion, and the fully coupled model.

All kinds run the same training protocol with the same epoch shuffles,
and structurally shared parameter blocks receive identical seed draws,
so a report compares fusion structure and nothing else. CONCAT_INPUT
and PRE_FUSION coincide here because one shared featurizer produces the
features either way; both rows are emitted.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import coupled, metrics
from .coupled import FULL, MultimodalModel
from .grid import DIRECTIONS, Direction, PatchGrid, check_pair, flip_to_scan
from .linalg import softmax_rows
from .rnn2d import (
    PlaneParams,
    SingleModel,
    backward_single,
    forward_single,
    logit_grad,
    masked_nll,
    scan_plane_backward,
    scan_plane_forward,
    zeros_like_single,
)
from .train import (
    TrainConfig,
    UNIFORM_FANIN,
    CoupledTrainable,
    draw_matrix,
    train_model,
)

SINGLE_C = "single_c"
SINGLE_D = "single_d"
CONCAT_INPUT = "concat_input"
PRE_FUSION = "pre_fusion"
MIDDLE_FUSION = "middle_fusion"
POST_FUSION = "post_fusion"
MULTIMODAL_OURS = "multimodal_ours"

KINDS = (SINGLE_C, SINGLE_D, CONCAT_INPUT, PRE_FUSION, MIDDLE_FUSION, POST_FUSION, MULTIMODAL_OURS)

# Seed-stream modality codes; 0 and 1 are shared with the coupled model.
_MOD_C, _MOD_D, _MOD_CONCAT, _MOD_FUSE = 0, 1, 2, 3


def concat_features(g_c: PatchGrid, g_d: PatchGrid) -> PatchGrid:
    """Input-level fusion: one grid carrying both feature vectors."""
    check_pair(g_c, g_d)
    feats = np.concatenate([g_c.features, g_d.features], axis=-1)
    return PatchGrid.create(feats, g_c.labels, g_c.num_classes)


def init_single_model(feat_dim: int, hidden_dim: int, num_classes: int,
                      seed: int, modality: int, scheme: str = UNIFORM_FANIN) -> SingleModel:
    planes = {}
    for d in DIRECTIONS:
        planes[d] = PlaneParams(
            draw_matrix(seed, modality, d, "u", (hidden_dim, feat_dim), scheme),
            draw_matrix(seed, modality, d, "w", (hidden_dim, hidden_dim), scheme),
            draw_matrix(seed, modality, d, "v", (num_classes, hidden_dim), scheme),
            np.zeros(hidden_dim),
        )
    return SingleModel(planes, np.zeros(num_classes))


@dataclass
class HalfPlane:
    """Recurrent weights of one modality inside the hidden-fusion model;
    classification happens in the shared head, so there is no v here."""

    u: np.ndarray
    w: np.ndarray
    b: np.ndarray

    def blocks(self, prefix: str = ""):
        yield prefix + "u", self.u
        yield prefix + "w", self.w
        yield prefix + "b", self.b


@dataclass
class MiddleFusionModel:
    """Two uncoupled recurrences; per direction one classifier over the
    concatenated hidden pair, with a single shared output bias."""

    planes_c: dict[Direction, HalfPlane]
    planes_d: dict[Direction, HalfPlane]
    v: dict[Direction, np.ndarray]  # (B, 2*Dh)
    c: np.ndarray                   # (B,)

    def blocks(self):
        for d in DIRECTIONS:
            yield from self.planes_c[d].blocks(f"c.{d.name}.")
        for d in DIRECTIONS:
            yield from self.planes_d[d].blocks(f"d.{d.name}.")
        for d in DIRECTIONS:
            yield f"fuse.{d.name}.v", self.v[d]
        yield "c", self.c

    @property
    def hidden_dim(self) -> int:
        return self.planes_c[Direction.TL].u.shape[0]


def init_middle_model(d_c: int, d_d: int, hidden_dim: int, num_classes: int,
                      seed: int, scheme: str = UNIFORM_FANIN) -> MiddleFusionModel:
    def half(feat_dim, modality):
        return {d: HalfPlane(
            draw_matrix(seed, modality, d, "u", (hidden_dim, feat_dim), scheme),
            draw_matrix(seed, modality, d, "w", (hidden_dim, hidden_dim), scheme),
            np.zeros(hidden_dim),
        ) for d in DIRECTIONS}

    v = {d: draw_matrix(seed, _MOD_FUSE, d, "v", (num_classes, 2 * hidden_dim), scheme)
         for d in DIRECTIONS}
    return MiddleFusionModel(half(d_c, _MOD_C), half(d_d, _MOD_D), v, np.zeros(num_classes))


def forward_middle(model: MiddleFusionModel, g_c: PatchGrid, g_d: PatchGrid):
    """Returns (caches per modality, logits, probs)."""
    check_pair(g_c, g_d)
    height, width = g_c.height, g_c.width
    hw = height * width
    dh = model.hidden_dim
    caches = {"c": {}, "d": {}}
    logits = np.zeros((hw, g_c.num_classes))
    for d in DIRECTIONS:
        parts = []
        for tag, planes, g in (("c", model.planes_c, g_c), ("d", model.planes_d, g_d)):
            p = planes[d]
            pre_f, tilde_f, h_f = scan_plane_forward(flip_to_scan(d, g.features), p.u, p.w, p.b)
            h = flip_to_scan(d, h_f)
            caches[tag][d] = (pre_f, tilde_f, h)
            parts.append(h.reshape(hw, dh))
        logits += np.concatenate(parts, axis=1) @ model.v[d].T
    logits += model.c
    logits = logits.reshape(height, width, -1)
    return caches, logits, softmax_rows(logits)


def zeros_like_middle(model: MiddleFusionModel) -> MiddleFusionModel:
    import copy

    out = copy.deepcopy(model)
    for _, block in out.blocks():
        block[...] = 0.0
    return out


def backward_middle(model: MiddleFusionModel, g_c: PatchGrid, g_d: PatchGrid, fwd):
    caches, _, probs = fwd
    height, width = g_c.height, g_c.width
    hw = height * width
    dh = model.hidden_dim
    gp2 = logit_grad(probs, g_c).reshape(hw, -1)
    grads = zeros_like_middle(model)
    for d in DIRECTIONS:
        v = model.v[d]
        for tag, planes, gplanes, g, off in (
            ("c", model.planes_c, grads.planes_c, g_c, 0),
            ("d", model.planes_d, grads.planes_d, g_d, dh),
        ):
            pre_f, tilde_f, h = caches[tag][d]
            gout = (gp2 @ v[:, off : off + dh]).reshape(height, width, dh)
            delta_f = scan_plane_backward(flip_to_scan(d, gout), pre_f, planes[d].w)
            d2 = delta_f.reshape(hw, dh)
            xf = flip_to_scan(d, g.features)
            gplanes[d].u += d2.T @ xf.reshape(hw, -1)
            gplanes[d].w += d2.T @ tilde_f.reshape(hw, dh)
            gplanes[d].b += d2.sum(axis=0)
        hcat = np.concatenate(
            [caches["c"][d][2].reshape(hw, dh), caches["d"][d][2].reshape(hw, dh)], axis=1
        )
        grads.v[d] += gp2.T @ hcat
    grads.c += gp2.sum(axis=0)
    return grads, masked_nll(probs, g_c)


class SingleTrainable:
    """Single RNN over one view of the pair: modality c, modality d, or
    the concatenated features."""

    def __init__(self, model: SingleModel, view: str):
        if view not in ("c", "d", "concat"):
            raise ValueError(f"unknown view {view!r}")
        self.model = model
        self.view = view

    def _grid(self, pair) -> PatchGrid:
        g_c, g_d = pair
        if self.view == "c":
            return g_c
        if self.view == "d":
            return g_d
        return concat_features(g_c, g_d)

    def step(self, pair, mode):
        g = self._grid(pair)
        cache = forward_single(self.model, g)
        grads, loss = backward_single(self.model, g, cache)
        return grads, loss, np.argmax(cache.probs, axis=-1)

    def predict_probs(self, pair):
        return forward_single(self.model, self._grid(pair)).probs


class MiddleTrainable:
    def __init__(self, model: MiddleFusionModel):
        self.model = model

    def step(self, pair, mode):
        fwd = forward_middle(self.model, *pair)
        grads, loss = backward_middle(self.model, *pair, fwd)
        return grads, loss, np.argmax(fwd[2], axis=-1)

    def predict_probs(self, pair):
        return forward_middle(self.model, *pair)[2]


class PostFusionPredictor:
    """Two independently trained single models, fused at the classifier
    level by averaging their class distributions."""

    def __init__(self, model_c: SingleModel, model_d: SingleModel):
        self.model_c = model_c
        self.model_d = model_d

    def predict_probs(self, pair):
        p_c = forward_single(self.model_c, pair[0]).probs
        p_d = forward_single(self.model_d, pair[1]).probs
        return (p_c + p_d) / 2.0


def _dims(dataset) -> tuple[int, int, int]:
    g_c, g_d = dataset[0]
    return g_c.feat_dim, g_d.feat_dim, g_c.num_classes


def build_and_train(kind: str, cfg: TrainConfig, dataset):
    """Construct, seed and fit one ablation kind under the shared protocol.

    Returns (predictor with .predict_probs, history). POST_FUSION's
    history is the per-epoch sum of its two constituent losses.
    """
    dataset = list(dataset)
    if not dataset:
        raise ValueError("dataset is empty")
    d_c, d_d, b = _dims(dataset)
    dh = cfg.hidden_dim
    if kind in (SINGLE_C, SINGLE_D):
        view = "c" if kind == SINGLE_C else "d"
        feat = d_c if kind == SINGLE_C else d_d
        mod = _MOD_C if kind == SINGLE_C else _MOD_D
        trainable = SingleTrainable(init_single_model(feat, dh, b, cfg.seed, mod, cfg.init_scheme), view)
        history = train_model(trainable, cfg, dataset)
        return trainable, history
    if kind in (CONCAT_INPUT, PRE_FUSION):
        model = init_single_model(d_c + d_d, dh, b, cfg.seed, _MOD_CONCAT, cfg.init_scheme)
        trainable = SingleTrainable(model, "concat")
        history = train_model(trainable, cfg, dataset)
        return trainable, history
    if kind == MIDDLE_FUSION:
        trainable = MiddleTrainable(init_middle_model(d_c, d_d, dh, b, cfg.seed, cfg.init_scheme))
        history = train_model(trainable, cfg, dataset)
        return trainable, history
    if kind == POST_FUSION:
        t_c = SingleTrainable(init_single_model(d_c, dh, b, cfg.seed, _MOD_C, cfg.init_scheme), "c")
        t_d = SingleTrainable(init_single_model(d_d, dh, b, cfg.seed, _MOD_D, cfg.init_scheme), "d")
        h_c = train_model(t_c, cfg, dataset)
        h_d = train_model(t_d, cfg, dataset)
        history = [
            {**rc, "loss": rc["loss"] + rd["loss"], "pixel_acc": (rc["pixel_acc"] + rd["pixel_acc"]) / 2.0}
            for rc, rd in zip(h_c, h_d)
        ]
        return PostFusionPredictor(t_c.model, t_d.model), history
    if kind == MULTIMODAL_OURS:
        from .train import init_model

        model = init_model(cfg, (d_c, d_d, dh, b), cfg.seed)
        trainable = CoupledTrainable(model, freeze_transfer=cfg.freeze_transfer)
        history = train_model(trainable, cfg, dataset)
        return trainable, history
    raise ValueError(f"unknown baseline kind {kind!r}")


def evaluate(predictor, dataset) -> dict:
    """Confusion-matrix metrics of a predictor over a scene list."""
    dataset = list(dataset)
    cm = metrics.new_confusion(dataset[0][0].num_classes)
    for pair in dataset:
        pred = np.argmax(predictor.predict_probs(pair), axis=-1)
        metrics.accumulate(cm, pred, pair[0])
    return metrics.summarize(cm)


def ablation_report(dataset, cfg: TrainConfig) -> dict:
    """Train every kind with shared seeds and score it on the dataset."""
    report = {}
    for kind in KINDS:
        predictor, _ = build_and_train(kind, cfg, dataset)
        report[kind] = evaluate(predictor, dataset)
    return report
