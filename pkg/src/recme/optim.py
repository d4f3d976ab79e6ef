"""Optimization pieces: step-decayed learning rate, Adam, and the
early-stopping tracker.

The learning rate starts at lr0 and is scaled by decay_factor after every
decay_every_steps batch updates: lr = lr0 * factor^(step // every). The
power is computed directly (not by repeated multiplication) so the value
at any step is a single rounding of the mathematical result.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .layers import ShapeMismatch

ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8


def lr_at_step(global_step: int, lr0: float, decay_factor: float, decay_every_steps: int) -> float:
    if global_step < 0:
        raise ValueError("global_step must be >= 0")
    return lr0 * decay_factor ** (global_step // decay_every_steps)


@dataclass
class AdamState:
    """First/second moment accumulators plus the 1-based update count."""

    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)
    t: int = 0


def adam_step(
    params: dict[str, np.ndarray],
    grads: dict[str, np.ndarray],
    lr: float,
    state: AdamState,
) -> None:
    """One bias-corrected Adam update, in place on params.

    state.t is incremented first, so the first call uses t = 1.
    """
    state.t += 1
    t = state.t
    for name, p in params.items():
        g = grads[name]
        if g.shape != p.shape:
            raise ShapeMismatch(f"{name}: grad {g.shape} vs param {p.shape}")
        if name not in state.m:
            state.m[name] = np.zeros_like(p)
            state.v[name] = np.zeros_like(p)
        m = state.m[name]
        v = state.v[name]
        m *= ADAM_BETA1
        m += (1.0 - ADAM_BETA1) * g
        v *= ADAM_BETA2
        v += (1.0 - ADAM_BETA2) * g * g
        m_hat = m / (1.0 - ADAM_BETA1**t)
        v_hat = v / (1.0 - ADAM_BETA2**t)
        p -= lr * m_hat / (np.sqrt(v_hat) + ADAM_EPS)


def sgd_step(
    params: dict[str, np.ndarray],
    grads: dict[str, np.ndarray],
    lr: float,
) -> None:
    """Plain gradient descent; kept behind config for ablation runs."""
    for name, p in params.items():
        g = grads[name]
        if g.shape != p.shape:
            raise ShapeMismatch(f"{name}: grad {g.shape} vs param {p.shape}")
        p -= lr * g


@dataclass
class EarlyStopper:
    """Stop when validation accuracy has not improved for `patience` epochs.

    Improvement is strict (ties keep the earlier epoch). `update` returns
    True when training should stop, i.e. epoch - best_epoch >= patience.
    """

    patience: int
    best_acc: float = float("-inf")
    best_epoch: int = 0

    def update(self, epoch: int, val_acc: float) -> bool:
        if val_acc > self.best_acc:
            self.best_acc = val_acc
            self.best_epoch = epoch
        return epoch - self.best_epoch >= self.patience
