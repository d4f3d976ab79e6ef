"""The residual 1D-CNN classifier.

Architecture: spectrum input [8000, 1] -> four residual blocks (each one
halves the length via max pooling) -> average pooling (3, stride 3) ->
flatten -> dense + ReLU + dropout -> dense + ReLU -> dense output ->
softmax over speaker classes. The final layer width equals the number of
enrolled speakers and grows when someone new is enrolled.

A residual block runs conv(3) -> ReLU -> conv(3) on the main path and
conv(1) on the shortcut, adds the two elementwise (so gradients reach the
block input through both branches), then ReLU and max pool.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import FEAT_LEN
from .layers import (
    ShapeMismatch,
    avgpool1d,
    avgpool1d_backward,
    conv1d,
    conv1d_backward,
    conv1d_with_cols,
    dense,
    dense_backward,
    dropout,
    dropout_backward,
    maxpool1d,
    maxpool1d_backward,
    relu,
    relu_backward,
    softmax_cce_backward,
)

NUM_BLOCKS = 4
NUM_HIDDEN_DENSE = 2
AVGPOOL_SIZE = 3

DEFAULT_BLOCK_FILTERS = (16, 32, 64, 128)
DEFAULT_DENSE_SIZES = (256, 128)
DEFAULT_DROPOUT = 0.2


class InvalidSpec(ValueError):
    """Architecture parameters that cannot form a valid model."""


class MissingCache(RuntimeError):
    """backward() called without a training-mode forward cache."""


@dataclass(frozen=True)
class ModelSpec:
    num_classes: int
    input_len: int = FEAT_LEN
    block_filters: tuple[int, ...] = DEFAULT_BLOCK_FILTERS
    dense_sizes: tuple[int, ...] = DEFAULT_DENSE_SIZES
    dropout_rate: float = DEFAULT_DROPOUT

    def __post_init__(self):
        object.__setattr__(self, "block_filters", tuple(self.block_filters))
        object.__setattr__(self, "dense_sizes", tuple(self.dense_sizes))
        if self.num_classes < 2:
            raise InvalidSpec("need at least 2 classes")
        if len(self.block_filters) != NUM_BLOCKS:
            raise InvalidSpec(f"expected {NUM_BLOCKS} residual block filter counts")
        if len(self.dense_sizes) != NUM_HIDDEN_DENSE:
            raise InvalidSpec(f"expected {NUM_HIDDEN_DENSE} hidden dense widths")
        if not 0.0 <= self.dropout_rate < 1.0:
            raise InvalidSpec("dropout_rate must be in [0, 1)")
        if self.pooled_len < 1:
            raise InvalidSpec(f"input_len {self.input_len} collapses to nothing")

    @property
    def block_out_len(self) -> int:
        n = self.input_len
        for _ in range(NUM_BLOCKS):
            n //= 2
        return n

    @property
    def pooled_len(self) -> int:
        return self.block_out_len // AVGPOOL_SIZE

    @property
    def flat_width(self) -> int:
        return self.pooled_len * self.block_filters[-1]


def build_model(num_classes: int, **overrides) -> ModelSpec:
    """Model spec for a given speaker count; keyword overrides for the rest."""
    return ModelSpec(num_classes=num_classes, **overrides)


def param_shapes(spec: ModelSpec) -> dict[str, tuple[int, ...]]:
    """Ordered parameter manifest; this order is the checkpoint layout."""
    shapes: dict[str, tuple[int, ...]] = {}
    c_in = 1
    for i, f in enumerate(spec.block_filters, start=1):
        shapes[f"block{i}.conv1.w"] = (3, c_in, f)
        shapes[f"block{i}.conv1.b"] = (f,)
        shapes[f"block{i}.conv2.w"] = (3, f, f)
        shapes[f"block{i}.conv2.b"] = (f,)
        shapes[f"block{i}.shortcut.w"] = (1, c_in, f)
        shapes[f"block{i}.shortcut.b"] = (f,)
        c_in = f
    widths = [spec.flat_width, *spec.dense_sizes, spec.num_classes]
    names = ["dense1", "dense2", "output"]
    for name, n_in, n_out in zip(names, widths, widths[1:]):
        shapes[f"{name}.w"] = (n_in, n_out)
        shapes[f"{name}.b"] = (n_out,)
    return shapes


def init_params(spec: ModelSpec, seed: int) -> dict[str, np.ndarray]:
    """He-uniform weights, U(-b, b) with b = sqrt(6 / fan_in); zero biases.

    Deterministic: one rng seeded by `seed`, drawn in manifest order.
    """
    rng = np.random.default_rng(seed)
    params: dict[str, np.ndarray] = {}
    for name, shape in param_shapes(spec).items():
        if name.endswith(".b"):
            params[name] = np.zeros(shape)
        else:
            fan_in = int(np.prod(shape[:-1]))
            bound = np.sqrt(6.0 / fan_in)
            params[name] = rng.uniform(-bound, bound, size=shape)
    return params


@dataclass
class ModelState:
    spec: ModelSpec
    params: dict[str, np.ndarray]
    registry: list[str]  # class index -> speaker name

    def __post_init__(self):
        if len(self.registry) != self.spec.num_classes:
            raise InvalidSpec("registry size must equal num_classes")
        expected = param_shapes(self.spec)
        if list(self.params) != list(expected):
            raise InvalidSpec("parameter names do not match the spec manifest")
        for name, shape in expected.items():
            if self.params[name].shape != shape:
                raise InvalidSpec(f"{name}: expected shape {shape}")

    def copy(self) -> "ModelState":
        return ModelState(self.spec, {k: v.copy() for k, v in self.params.items()},
                          list(self.registry))


def new_state(registry: list[str], seed: int, **spec_overrides) -> ModelState:
    spec = build_model(len(registry), **spec_overrides)
    return ModelState(spec, init_params(spec, seed), list(registry))


@dataclass
class ForwardCache:
    """Activations and routing indices the backward pass consumes."""

    batch: np.ndarray
    blocks: list[dict] = field(default_factory=list)
    block_out_len: int = 0
    flat: np.ndarray | None = None
    z1: np.ndarray | None = None
    h1_dropped: np.ndarray | None = None
    dropout_mask: np.ndarray | None = None
    z2: np.ndarray | None = None
    h2: np.ndarray | None = None
    logits: np.ndarray | None = None
    probs: np.ndarray | None = None
    training: bool = True


def residual_block(
    x: np.ndarray,
    conv1_w: np.ndarray,
    conv1_b: np.ndarray,
    conv2_w: np.ndarray,
    conv2_b: np.ndarray,
    shortcut_w: np.ndarray,
    shortcut_b: np.ndarray,
    keep_cols: bool = False,
) -> tuple[np.ndarray, dict]:
    """One residual block: [B, L, C_in] -> [B, L//2, filters].

    keep_cols stashes the convolutions' im2col matrices in the cache so a
    following backward pass avoids rebuilding them (train mode only; they
    are large)."""
    h, cols1 = conv1d_with_cols(x, conv1_w, conv1_b)
    np.maximum(h, 0.0, out=h)  # in place; h > 0 doubles as the ReLU mask
    added, cols2 = conv1d_with_cols(h, conv2_w, conv2_b)
    added += conv1d(x, shortcut_w, shortcut_b)
    relu_mask = added > 0
    np.maximum(added, 0.0, out=added)
    out, pool_first = maxpool1d(added)
    cache = {"x": x, "h": h, "relu_mask": relu_mask, "pool_first": pool_first,
             "length": x.shape[1],
             "cols1": cols1 if keep_cols else None,
             "cols2": cols2 if keep_cols else None}
    return out, cache


def _residual_block_backward(
    cache: dict,
    conv1_w: np.ndarray,
    conv2_w: np.ndarray,
    shortcut_w: np.ndarray,
    dout: np.ndarray,
) -> tuple[np.ndarray, tuple]:
    dv = maxpool1d_backward(cache["pool_first"], cache["length"], dout)
    dadd = np.where(cache["relu_mask"], dv, 0.0)
    # the elementwise add fans the gradient out to both branches
    dh, dw2, db2 = conv1d_backward(cache["h"], conv2_w, dadd, cols=cache["cols2"])
    dz1 = relu_backward(cache["h"], dh)  # h > 0 iff z1 > 0
    dx_main, dw1, db1 = conv1d_backward(cache["x"], conv1_w, dz1, cols=cache["cols1"])
    dx_short, dws, dbs = conv1d_backward(cache["x"], shortcut_w, dadd)
    return dx_main + dx_short, (dw1, db1, dw2, db2, dws, dbs)


def forward(
    state: ModelState,
    batch: np.ndarray,
    mode: str = "infer",
    rng: np.random.Generator | None = None,
) -> tuple[np.ndarray, ForwardCache | None]:
    """Run the network. Returns (probs [B, C], cache in train mode else None)."""
    if mode not in ("train", "infer"):
        raise ValueError(f"mode must be 'train' or 'infer', got {mode!r}")
    training = mode == "train"
    spec = state.spec
    p = state.params
    batch = np.asarray(batch, dtype=np.float64)
    if batch.ndim == 2:
        batch = batch[:, :, None]
    if batch.shape[1] != spec.input_len or batch.shape[2] != 1:
        raise ShapeMismatch(f"batch must be [B, {spec.input_len}, 1], got {batch.shape}")

    cache = ForwardCache(batch=batch, training=training)
    x = batch
    for i in range(1, NUM_BLOCKS + 1):
        x, block_cache = residual_block(
            x,
            p[f"block{i}.conv1.w"], p[f"block{i}.conv1.b"],
            p[f"block{i}.conv2.w"], p[f"block{i}.conv2.b"],
            p[f"block{i}.shortcut.w"], p[f"block{i}.shortcut.b"],
            keep_cols=training,
        )
        cache.blocks.append(block_cache)
    cache.block_out_len = x.shape[1]
    x = avgpool1d(x, AVGPOOL_SIZE)
    flat = x.reshape(x.shape[0], -1)
    cache.flat = flat

    z1 = dense(flat, p["dense1.w"], p["dense1.b"])
    cache.z1 = z1
    h1 = relu(z1)
    h1, mask = dropout(h1, spec.dropout_rate, rng, training)
    cache.h1_dropped = h1
    cache.dropout_mask = mask
    z2 = dense(h1, p["dense2.w"], p["dense2.b"])
    cache.z2 = z2
    h2 = relu(z2)
    cache.h2 = h2
    logits = dense(h2, p["output.w"], p["output.b"])
    cache.logits = logits

    shifted = logits - logits.max(axis=1, keepdims=True)
    exp = np.exp(shifted)
    probs = exp / exp.sum(axis=1, keepdims=True)
    cache.probs = probs
    return probs, cache if training else None


def backward(state: ModelState, cache: ForwardCache | None, labels) -> dict[str, np.ndarray]:
    """Gradients of the mean batch cross-entropy w.r.t. every parameter."""
    if cache is None or not cache.training or cache.probs is None:
        raise MissingCache("backward needs the cache from a train-mode forward")
    p = state.params
    spec = state.spec
    n = cache.probs.shape[0]

    dlogits = softmax_cce_backward(cache.probs, labels) / n
    dh2, dw_out, db_out = dense_backward(cache.h2, p["output.w"], dlogits)
    dz2 = relu_backward(cache.z2, dh2)
    dh1, dw2, db2 = dense_backward(cache.h1_dropped, p["dense2.w"], dz2)
    dh1 = dropout_backward(cache.dropout_mask, spec.dropout_rate, dh1)
    dz1 = relu_backward(cache.z1, dh1)
    dflat, dw1, db1 = dense_backward(cache.flat, p["dense1.w"], dz1)

    grads: dict[str, np.ndarray] = {}
    pooled = dflat.reshape(n, spec.pooled_len, spec.block_filters[-1])
    dx = avgpool1d_backward(cache.block_out_len, AVGPOOL_SIZE, pooled)
    for i in range(NUM_BLOCKS, 0, -1):
        dx, (g1w, g1b, g2w, g2b, gsw, gsb) = _residual_block_backward(
            cache.blocks[i - 1],
            p[f"block{i}.conv1.w"], p[f"block{i}.conv2.w"], p[f"block{i}.shortcut.w"],
            dx,
        )
        grads[f"block{i}.conv1.w"] = g1w
        grads[f"block{i}.conv1.b"] = g1b
        grads[f"block{i}.conv2.w"] = g2w
        grads[f"block{i}.conv2.b"] = g2b
        grads[f"block{i}.shortcut.w"] = gsw
        grads[f"block{i}.shortcut.b"] = gsb

    grads["dense1.w"] = dw1
    grads["dense1.b"] = db1
    grads["dense2.w"] = dw2
    grads["dense2.b"] = db2
    grads["output.w"] = dw_out
    grads["output.b"] = db_out
    return {name: grads[name] for name in p}
