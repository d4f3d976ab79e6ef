"""Finite-difference verification of the full-model backward pass.

Runs a deliberately tiny network (input 64, filters 2/3/4/4, dense 8/4,
3 classes, dropout off) so central differences over every single parameter
stay cheap. Continuous random inputs keep pooling ties out of the picture.
"""

from __future__ import annotations

import numpy as np

from .layers import softmax_cce
from .model import ModelSpec, ModelState, backward, forward, init_params

TINY_SPEC = ModelSpec(
    num_classes=3,
    input_len=64,
    block_filters=(2, 3, 4, 4),
    dense_sizes=(8, 4),
    dropout_rate=0.0,
)

TOLERANCE = 1e-4


def _mean_loss(state: ModelState, batch: np.ndarray, labels: np.ndarray) -> float:
    _, cache = forward(state, batch, mode="train")
    _, losses = softmax_cce(cache.logits, labels)
    return float(np.mean(losses))


def full_model_gradcheck(seed: int = 7, h: float = 1e-5) -> dict:
    """Compare analytic gradients to central differences, every parameter.

    Returns {"max_rel_err", "worst_param", "per_param", "passed"}. The
    relative error is |analytic - numeric| / max(|analytic|, |numeric|,
    1e-8) elementwise.
    """
    rng = np.random.default_rng(seed)
    state = ModelState(TINY_SPEC, init_params(TINY_SPEC, seed), ["a", "b", "c"])
    batch = rng.normal(size=(2, TINY_SPEC.input_len, 1))
    labels = np.array([0, 2])

    _, cache = forward(state, batch, mode="train")
    analytic = backward(state, cache, labels)

    per_param: dict[str, float] = {}
    worst = ("", 0.0)
    for name, tensor in state.params.items():
        grad = analytic[name]
        numeric = np.zeros_like(tensor)
        flat = tensor.reshape(-1)
        num_flat = numeric.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + h
            up = _mean_loss(state, batch, labels)
            flat[i] = orig - h
            down = _mean_loss(state, batch, labels)
            flat[i] = orig
            num_flat[i] = (up - down) / (2.0 * h)
        denom = np.maximum(np.maximum(np.abs(grad), np.abs(numeric)), 1e-8)
        rel = float(np.max(np.abs(grad - numeric) / denom))
        per_param[name] = rel
        if rel > worst[1]:
            worst = (name, rel)

    return {
        "max_rel_err": worst[1],
        "worst_param": worst[0],
        "per_param": per_param,
        "passed": worst[1] <= TOLERANCE,
    }
