"""Differentiable layer primitives: forward passes and analytic backwards.

Everything is float64. Sequence activations are [batch, length, channels];
dense activations are [batch, width]. Forward functions return extra cache
values (pool argmax, dropout mask) only where the backward pass cannot
cheaply recompute them. Each backward is validated against central finite
differences in the test suite.
"""

from __future__ import annotations

import numpy as np


class ShapeMismatch(ValueError):
    """Operand shapes are inconsistent with the operation."""


class LabelOutOfRange(IndexError):
    """A class label falls outside [0, num_classes)."""


def conv1d(x: np.ndarray, kernel: np.ndarray, bias: np.ndarray) -> np.ndarray:
    """Same-padded 1D convolution.

    x [B, L, C_in], kernel [K, C_in, C_out] with K odd, bias [C_out]
    -> [B, L, C_out]. out[t, o] = bias[o] + sum_{k,c} x[t+k-(K-1)/2, c] *
    kernel[k, c, o], with zeros past the edges.
    """
    k_len, c_in, c_out = kernel.shape
    if k_len % 2 == 0:
        raise ShapeMismatch("kernel length must be odd")
    if x.ndim != 3 or x.shape[2] != c_in or bias.shape != (c_out,):
        raise ShapeMismatch(
            f"conv1d got x {x.shape}, kernel {kernel.shape}, bias {bias.shape}"
        )
    out, _ = conv1d_with_cols(x, kernel, bias)
    return out


def conv1d_with_cols(
    x: np.ndarray, kernel: np.ndarray, bias: np.ndarray
) -> tuple[np.ndarray, np.ndarray]:
    """conv1d that also returns its im2col matrix.

    The backward pass needs the same matrix; on a bandwidth-bound host the
    rebuild costs more than the GEMMs, so callers that will run backward
    keep it (see conv1d_backward's `cols`).
    """
    k_len, c_in, c_out = kernel.shape
    if k_len % 2 == 0:
        raise ShapeMismatch("kernel length must be odd")
    if x.ndim != 3 or x.shape[2] != c_in or bias.shape != (c_out,):
        raise ShapeMismatch(
            f"conv1d got x {x.shape}, kernel {kernel.shape}, bias {bias.shape}"
        )
    b, length, _ = x.shape
    cols = _im2col(x, k_len)
    out = cols @ kernel.reshape(k_len * c_in, c_out)
    out += bias
    return out.reshape(b, length, c_out), cols


def _im2col(x: np.ndarray, k_len: int) -> np.ndarray:
    # [B, L, C] -> [B*L, K*C]: row t holds the K same-padded input frames
    # around t. One big matrix keeps the convolution a single GEMM.
    b, length, c = x.shape
    if k_len == 1:
        return x.reshape(b * length, c)
    pad = (k_len - 1) // 2
    xp = np.pad(x, ((0, 0), (pad, pad), (0, 0)))
    cols = np.empty((b, length, k_len, c))
    for k in range(k_len):
        cols[:, :, k, :] = xp[:, k : k + length, :]
    return cols.reshape(b * length, k_len * c)


def conv1d_backward(
    x: np.ndarray,
    kernel: np.ndarray,
    dout: np.ndarray,
    cols: np.ndarray | None = None,
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Gradients of conv1d w.r.t. (input, kernel, bias).

    Pass the `cols` matrix from conv1d_with_cols to skip rebuilding it.
    """
    k_len, c_in, c_out = kernel.shape
    b, length, _ = x.shape
    if cols is None:
        cols = _im2col(x, k_len)
    dflat = dout.reshape(b * length, c_out)
    dkernel = (cols.T @ dflat).reshape(kernel.shape)
    dbias = dout.sum(axis=(0, 1))
    if k_len == 1:
        return (dflat @ kernel[0].T).reshape(x.shape), dkernel, dbias
    pad = (k_len - 1) // 2
    dcols = (dflat @ kernel.reshape(k_len * c_in, c_out).T).reshape(b, length, k_len, c_in)
    dxp = np.zeros((b, length + 2 * pad, c_in))
    for k in range(k_len):
        dxp[:, k : k + length, :] += dcols[:, :, k, :]
    return dxp[:, pad : pad + length, :], dkernel, dbias


def relu(x: np.ndarray) -> np.ndarray:
    return np.maximum(x, 0.0)


def relu_backward(x: np.ndarray, dout: np.ndarray) -> np.ndarray:
    # subgradient 0 at x <= 0
    return np.where(x > 0, dout, 0.0)


def maxpool1d(x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Non-overlapping max pooling, pool=stride=2; odd tail dropped.

    Returns (pooled [B, L//2, C], selector: True where the earlier element
    of the pair won). Ties take the earlier position, so the backward
    routing is deterministic.
    """
    b, length, c = x.shape
    if length < 2:
        raise ShapeMismatch("maxpool1d needs length >= 2")
    t = length // 2
    first = x[:, 0 : 2 * t : 2, :]
    second = x[:, 1 : 2 * t : 2, :]
    first_wins = first >= second
    return np.where(first_wins, first, second), first_wins


def maxpool1d_backward(first_wins: np.ndarray, input_len: int, dout: np.ndarray) -> np.ndarray:
    b, t, c = dout.shape
    dx = np.zeros((b, input_len, c))
    dx[:, 0 : 2 * t : 2, :] = np.where(first_wins, dout, 0.0)
    dx[:, 1 : 2 * t : 2, :] = np.where(first_wins, 0.0, dout)
    return dx


def avgpool1d(x: np.ndarray, pool: int = 3) -> np.ndarray:
    """Non-overlapping window means, stride = pool; tail remainder dropped."""
    b, length, c = x.shape
    if length < pool:
        raise ShapeMismatch(f"avgpool1d needs length >= {pool}")
    t = length // pool
    return x[:, : t * pool, :].reshape(b, t, pool, c).mean(axis=2)


def avgpool1d_backward(input_len: int, pool: int, dout: np.ndarray) -> np.ndarray:
    b, t, c = dout.shape
    dx = np.zeros((b, input_len, c))
    dx[:, : t * pool, :] = np.repeat(dout / pool, pool, axis=1)
    return dx


def dense(x: np.ndarray, weight: np.ndarray, bias: np.ndarray) -> np.ndarray:
    """x [B, N_in] @ weight [N_in, N_out] + bias."""
    if x.ndim != 2 or x.shape[1] != weight.shape[0] or bias.shape != (weight.shape[1],):
        raise ShapeMismatch(f"dense got x {x.shape}, weight {weight.shape}")
    return x @ weight + bias


def dense_backward(
    x: np.ndarray, weight: np.ndarray, dout: np.ndarray
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    return dout @ weight.T, x.T @ dout, dout.sum(axis=0)


def dropout(
    x: np.ndarray, rate: float, rng: np.random.Generator | None, training: bool
) -> tuple[np.ndarray, np.ndarray | None]:
    """Inverted dropout: zero with probability rate, scale survivors by
    1/(1-rate) so inference is the identity. Returns (out, mask)."""
    if not 0.0 <= rate < 1.0:
        raise ValueError("dropout rate must be in [0, 1)")
    if not training or rate == 0.0:
        return x, None
    mask = rng.random(x.shape) >= rate
    return x * mask / (1.0 - rate), mask


def dropout_backward(mask: np.ndarray | None, rate: float, dout: np.ndarray) -> np.ndarray:
    if mask is None:
        return dout
    return dout * mask / (1.0 - rate)


def softmax_cce(logits: np.ndarray, labels) -> tuple[np.ndarray, np.ndarray]:
    """Softmax probabilities and sparse categorical cross-entropy.

    logits [B, C] (or [C]), integer labels [B] (or scalar). Returns
    (probs, per-item losses), stabilized by max subtraction.
    """
    squeeze = logits.ndim == 1
    z = np.atleast_2d(logits)
    labels = np.atleast_1d(np.asarray(labels, dtype=np.int64))
    n, c = z.shape
    if labels.shape != (n,):
        raise ShapeMismatch("one label per batch item")
    if labels.min(initial=0) < 0 or labels.max(initial=0) >= c:
        raise LabelOutOfRange(f"labels must lie in [0, {c})")
    shifted = z - z.max(axis=1, keepdims=True)
    exp = np.exp(shifted)
    total = exp.sum(axis=1, keepdims=True)
    probs = exp / total
    losses = np.log(total[:, 0]) - shifted[np.arange(n), labels]
    if squeeze:
        return probs[0], losses[0]
    return probs, losses


def softmax_cce_backward(probs: np.ndarray, labels) -> np.ndarray:
    """d(loss_i)/d(logits_i) = probs_i - onehot(label_i), per item."""
    probs = np.atleast_2d(probs)
    labels = np.atleast_1d(np.asarray(labels, dtype=np.int64))
    grad = probs.copy()
    grad[np.arange(probs.shape[0]), labels] -= 1.0
    return grad
