"""Finite-difference gradient oracle and comparison helpers.

Central differences cost two full forward passes per scalar parameter
but are independent of every analytic backward path, which makes them
the package's primary correctness instrument.
"""

from __future__ import annotations

import math

import numpy as np

DEFAULT_EPSILON = 1e-5

# Shared denominator floor so dead-parameter comparisons do not blow up.
_REL_FLOOR = 1e-12


def finite_diff_grad(loss_fn, model, epsilon: float = DEFAULT_EPSILON):
    """Central-difference gradient of `loss_fn(model)` for every scalar.

    The model is perturbed in place and restored exactly; `loss_fn` must
    therefore read the live object. Returns a zeroed structural mirror
    of `model` filled with the estimates.
    """
    if epsilon <= 0:
        raise ValueError(f"epsilon must be positive, got {epsilon}")
    import copy

    grads = copy.deepcopy(model)
    for _, block in grads.blocks():
        block[...] = 0.0
    for (name, param), (_, out) in zip(model.blocks(), grads.blocks()):
        flat_p = param.reshape(-1)
        flat_g = out.reshape(-1)
        for i in range(flat_p.shape[0]):
            orig = flat_p[i]
            flat_p[i] = orig + epsilon
            hi = loss_fn(model)
            flat_p[i] = orig - epsilon
            lo = loss_fn(model)
            flat_p[i] = orig
            if not (math.isfinite(hi) and math.isfinite(lo)):
                raise FloatingPointError(f"non-finite loss while perturbing {name}[{i}]")
            flat_g[i] = (hi - lo) / (2.0 * epsilon)
    return grads


def relative_error(a, b) -> dict[str, float]:
    """Per-block max of |a - b| / max(floor, |a| + |b|)."""
    errs = {}
    for (name, ba), (name_b, bb) in zip(a.blocks(), b.blocks()):
        if name != name_b or ba.shape != bb.shape:
            raise ValueError(f"gradient structures disagree at {name} vs {name_b}")
        denom = np.maximum(_REL_FLOOR, np.abs(ba) + np.abs(bb))
        errs[name] = float(np.max(np.abs(ba - bb) / denom)) if ba.size else 0.0
    return errs


def worst_block(errs: dict[str, float]) -> tuple[str, float]:
    name = max(errs, key=errs.get)
    return name, errs[name]
