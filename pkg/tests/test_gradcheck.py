import numpy as np
import pytest

from mmrnn.coupled import FULL, backward_coupled, forward_coupled, loss_coupled
from mmrnn.gradcheck import finite_diff_grad, relative_error, worst_block

from conftest import random_pair, small_model


class _Bag:
    def __init__(self, *arrays):
        self.arrays = [np.array(a, dtype=np.float64) for a in arrays]

    def blocks(self):
        for i, a in enumerate(self.arrays):
            yield f"block{i}", a


def test_quadratic_loss_recovers_2theta():
    theta = _Bag([1.0, -2.0, 0.5], [[3.0, 4.0]])
    loss = lambda m: sum(float((a * a).sum()) for a in m.arrays)
    grads = finite_diff_grad(loss, theta)
    for a, g in zip(theta.arrays, grads.arrays):
        assert np.max(np.abs(g - 2 * a)) < 1e-8


def test_model_is_restored_exactly():
    model = small_model(0)
    before = [blk.copy() for _, blk in model.blocks()]
    g_c, g_d = random_pair(0, 2, 2)
    finite_diff_grad(lambda m: loss_coupled(forward_coupled(m, g_c, g_d), g_c, g_d), model)
    for (_, blk), want in zip(model.blocks(), before):
        assert np.array_equal(blk, want)


def test_nonfinite_loss_names_the_parameter():
    theta = _Bag([1.0])
    with pytest.raises(FloatingPointError, match="block0"):
        finite_diff_grad(lambda m: float("nan"), theta)


def test_epsilon_must_be_positive():
    with pytest.raises(ValueError):
        finite_diff_grad(lambda m: 0.0, _Bag([1.0]), epsilon=0.0)


def test_relative_error_examples():
    a = _Bag([1.0, 2.0])
    assert relative_error(a, a) == {"block0": 0.0}
    b = _Bag([2.0, 4.0])
    errs = relative_error(b, a)  # a = 2b pattern: |2x - x| / (3|x|)
    assert abs(errs["block0"] - 1.0 / 3.0) < 1e-12
    z = _Bag([0.0, 0.0])
    assert relative_error(z, z) == {"block0": 0.0}


def test_worst_block_reports_max():
    errs = {"a": 0.1, "b": 0.7, "c": 0.3}
    assert worst_block(errs) == ("b", 0.7)


def test_epsilon_sweep_is_v_shaped_around_1e5():
    """Central differences: truncation error falls from 1e-4 to 1e-5."""
    model = small_model(21)
    g_c, g_d = random_pair(21, 2, 3)
    cache = forward_coupled(model, g_c, g_d)
    analytic, _ = backward_coupled(model, g_c, g_d, cache, FULL)
    loss = lambda m: loss_coupled(forward_coupled(m, g_c, g_d), g_c, g_d)
    errs = {}
    for eps in (1e-4, 1e-5, 1e-6):
        _, errs[eps] = worst_block(relative_error(analytic, finite_diff_grad(loss, model, eps)))
    assert errs[1e-5] <= errs[1e-4]
