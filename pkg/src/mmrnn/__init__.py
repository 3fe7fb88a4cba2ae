"""Multimodal quad-directional 2D RNNs with cross-modal transfer layers."""

from .coupled import (
    FULL,
    PAPER,
    ForwardCache,
    Gradients,
    MultimodalModel,
    backward_coupled,
    forward_coupled,
    fused_probs,
    loss_coupled,
    predict_labels,
)
from .grid import DIRECTIONS, SENTINEL_UNLABELED, Direction, PatchGrid
from .rnn2d import SingleModel, backward_single, forward_single, loss_single
from .train import TrainConfig, init_model, sgd_step, train_epochs

__all__ = [
    "FULL",
    "PAPER",
    "DIRECTIONS",
    "SENTINEL_UNLABELED",
    "Direction",
    "ForwardCache",
    "Gradients",
    "MultimodalModel",
    "PatchGrid",
    "SingleModel",
    "TrainConfig",
    "backward_coupled",
    "backward_single",
    "forward_coupled",
    "forward_single",
    "fused_probs",
    "init_model",
    "loss_coupled",
    "loss_single",
    "predict_labels",
    "sgd_step",
    "train_epochs",
]
