import numpy as np
import pytest

from mmrnn.coupled import forward_coupled, backward_coupled, loss_coupled, FULL
from mmrnn.grid import DIRECTIONS
from mmrnn.train import (
    TrainConfig,
    CoupledTrainable,
    init_model,
    sgd_step,
    shuffle_order,
    train_epochs,
    zeros_like,
)

from conftest import random_pair, small_model


class _Scalar:
    def __init__(self, value):
        self.p = np.array([value])

    def blocks(self):
        yield "p", self.p


def _tiny_dataset(n=4, seed=0, h=4, w=4):
    return [random_pair(seed + i, h, w, unlabeled=2) for i in range(n)]


def test_config_defaults_follow_reference_protocol():
    cfg = TrainConfig()
    assert cfg.lr0 == 1e-5
    assert cfg.momentum == 0.9
    assert cfg.clip_threshold == 2000.0
    assert cfg.hidden_dim == 64
    assert cfg.lr_decay_per_epoch == 0.99


def test_config_rejects_bad_values():
    with pytest.raises(ValueError):
        TrainConfig(lr0=0.0)
    with pytest.raises(ValueError):
        TrainConfig(momentum=1.0)
    with pytest.raises(ValueError):
        TrainConfig(backward_mode="bogus")


def test_init_model_deterministic():
    cfg = TrainConfig(hidden_dim=4)
    a = init_model(cfg, (3, 2, 4, 3), 42)
    b = init_model(cfg, (3, 2, 4, 3), 42)
    for (_, x), (_, y) in zip(a.blocks(), b.blocks()):
        assert np.array_equal(x, y)


def test_init_model_fanin_bound_and_zero_biases():
    cfg = TrainConfig()
    model = init_model(cfg, (16, 8, 64, 4), 0)
    for name, blk in model.blocks():
        if name.endswith((".b", "c_bias")):
            assert np.array_equal(blk, np.zeros_like(blk))
        elif name.endswith((".w", ".s")):
            assert np.max(np.abs(blk)) <= 1.0 / 8.0  # 1/sqrt(64)
        elif name.endswith(".u"):
            fan_in = blk.shape[1]
            assert np.max(np.abs(blk)) <= 1.0 / np.sqrt(fan_in)


def test_sgd_step_zero_grads_is_noop():
    model = small_model(0)
    before = [blk.copy() for _, blk in model.blocks()]
    sgd_step(model, zeros_like(model), zeros_like(model), lr=0.1, momentum=0.9)
    for (_, blk), want in zip(model.blocks(), before):
        assert np.array_equal(blk, want)


def test_sgd_step_hand_recurrence():
    p, v, g = _Scalar(1.0), _Scalar(0.0), _Scalar(2.0)
    sgd_step(p, v, g, lr=0.1, momentum=0.9)
    assert np.allclose(v.p, [-0.2]) and np.allclose(p.p, [0.8])
    sgd_step(p, v, g, lr=0.1, momentum=0.9)
    assert np.allclose(v.p, [-0.38]) and np.allclose(p.p, [0.42])


def test_shuffle_depends_only_on_seed_and_epoch():
    a = shuffle_order(7, 3, 10)
    b = shuffle_order(7, 3, 10)
    c = shuffle_order(7, 4, 10)
    assert np.array_equal(a, b)
    assert not np.array_equal(a, c)


def test_train_epochs_rejects_empty_dataset():
    with pytest.raises(ValueError, match="empty"):
        train_epochs(TrainConfig(hidden_dim=4), [])


def test_lr_zero_leaves_model_unchanged():
    cfg = TrainConfig(epochs=3, seed=3, hidden_dim=4, lr0=1e-300)
    dataset = _tiny_dataset()
    model, history = train_epochs(cfg, dataset)
    fresh = init_model(cfg, model.dims, cfg.seed)
    for (_, got), (_, want) in zip(model.blocks(), fresh.blocks()):
        assert np.max(np.abs(got - want)) < 1e-290
    losses = [h["loss"] for h in history]
    assert max(losses) - min(losses) < 1e-290


def test_training_is_deterministic_to_the_bit():
    cfg = TrainConfig(epochs=2, seed=5, hidden_dim=4)
    dataset = _tiny_dataset()
    m1, h1 = train_epochs(cfg, dataset)
    m2, h2 = train_epochs(cfg, dataset)
    assert h1 == h2
    for (_, a), (_, b) in zip(m1.blocks(), m2.blocks()):
        assert np.array_equal(a, b)


def test_lr_schedule_is_multiplicative_decay():
    cfg = TrainConfig(epochs=5, seed=1, hidden_dim=4)
    _, history = train_epochs(cfg, _tiny_dataset(2))
    for e, rec in enumerate(history):
        assert rec["lr"] == 1e-5 * 0.99 ** e


def test_clip_threshold_enforced_every_step():
    cfg = TrainConfig(epochs=2, seed=2, hidden_dim=4, clip_threshold=0.05)
    clip_log = []
    train_epochs(cfg, _tiny_dataset(3), clip_log=clip_log)
    assert clip_log, "no steps recorded"
    assert any(pre > 0.05 for pre, _ in clip_log), "clipping never exercised"
    assert all(post <= 0.05 * (1 + 1e-9) for _, post in clip_log)


@pytest.mark.parametrize("seed", range(10))
def test_single_step_descends_with_tiny_lr(seed):
    model = small_model(seed)
    g_c, g_d = random_pair(seed, 3, 3, unlabeled=1)
    cache = forward_coupled(model, g_c, g_d)
    grads, loss0 = backward_coupled(model, g_c, g_d, cache, FULL)
    vel = zeros_like(model)
    sgd_step(model, vel, grads, lr=1e-7, momentum=0.0)
    loss1 = loss_coupled(forward_coupled(model, g_c, g_d), g_c, g_d)
    assert loss1 < loss0


def test_freeze_transfer_keeps_s_at_zero():
    cfg = TrainConfig(epochs=2, seed=6, hidden_dim=4, freeze_transfer=True)
    dataset = _tiny_dataset(3)
    model, _ = train_epochs(cfg, dataset)
    # S never moves only if it also starts at zero
    model2 = init_model(cfg, model.dims, cfg.seed)
    for tag in ("c", "d"):
        for d in DIRECTIONS:
            model2.modality(tag).planes[d].s[...] = 0.0
    trained, _ = train_epochs(cfg, dataset, model=model2)
    for tag in ("c", "d"):
        for d in DIRECTIONS:
            assert np.array_equal(trained.modality(tag).planes[d].s, np.zeros((4, 4)))


def test_history_emits_json_lines():
    import io
    import json

    cfg = TrainConfig(epochs=2, seed=8, hidden_dim=4)
    stream = io.StringIO()
    _, history = train_epochs(cfg, _tiny_dataset(2), log_stream=stream)
    lines = stream.getvalue().strip().splitlines()
    assert len(lines) == 2
    for line, rec in zip(lines, history):
        parsed = json.loads(line)
        assert set(parsed) == {"epoch", "lr", "loss", "pixel_acc"}
        assert parsed == rec
