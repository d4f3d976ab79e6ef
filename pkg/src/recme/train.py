"""The training loop.

Each epoch shuffles the training clips (seeded), walks them in batches
(last partial batch kept), and per batch: noise-augment -> FFT magnitudes
-> forward -> sparse categorical cross-entropy -> backward -> Adam update
at the step-decayed learning rate. Validation runs after every epoch on
independently noise-augmented clips; early stopping tracks the best
validation accuracy and restores that epoch's parameters.

Everything is deterministic for a fixed config seed: shuffling,
augmentation, dropout and evaluation draw from rng streams derived from
(seed, purpose tag), so identical runs produce identical metrics and
identical checkpoint bytes.
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Callable

import numpy as np

from .dataset import DatasetIndex, augment_batch
from .features import clip_spectra
from .layers import softmax_cce
from .model import ModelState, backward, forward
from .optim import AdamState, EarlyStopper, adam_step, lr_at_step, sgd_step

EVAL_BATCH = 64
HISTOGRAM_BINS = 50
HISTOGRAM_LAYERS = ("output.w", "output.b")


@dataclass(frozen=True)
class TrainingConfig:
    seed: int = 0
    batch_size: int = 32
    lr0: float = 1e-4
    decay_factor: float = 0.7
    decay_every_steps: int = 250
    patience: int = 10
    max_epochs: int = 200
    noise_scale: float = 0.5
    split_ratio: float = 0.8
    dropout_rate: float = 0.2
    optimizer: str = "adam"  # "sgd" available for ablation

    def __post_init__(self):
        if not 0.0 < self.split_ratio < 1.0:
            raise ValueError("split_ratio must be in (0, 1)")
        if self.patience < 1:
            raise ValueError("patience must be >= 1")
        if self.decay_every_steps < 1:
            raise ValueError("decay_every_steps must be >= 1")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.optimizer not in ("adam", "sgd"):
            raise ValueError("optimizer must be 'adam' or 'sgd'")

    def lr_at(self, global_step: int) -> float:
        return lr_at_step(global_step, self.lr0, self.decay_factor, self.decay_every_steps)


@dataclass
class EpochMetrics:
    epoch: int
    global_step: int
    train_loss: float
    train_acc: float
    val_loss: float
    val_acc: float
    lr: float


@dataclass
class HistogramSnapshot:
    epoch: int
    layer: str
    edges: list[float]  # HISTOGRAM_BINS + 1 values
    counts: list[int]


@dataclass
class FitResult:
    state: ModelState
    metrics: list[EpochMetrics]
    histograms: list[HistogramSnapshot]
    best_epoch: int
    best_val_acc: float


def train_rng(seed: int) -> np.random.Generator:
    """The stream feeding shuffle, augmentation, and dropout draws."""
    return np.random.default_rng([seed, 1])


def eval_rng(seed: int, epoch: int) -> np.random.Generator:
    """Validation augmentation stream; independent of training draws."""
    return np.random.default_rng([seed, 2, epoch])


def _spectra_batch(
    entries: list, noise_clips, noise_scale: float, rng: np.random.Generator
) -> tuple[np.ndarray, np.ndarray]:
    clips = [clip for clip, _ in entries]
    labels = np.array([label for _, label in entries], dtype=np.int64)
    samples = augment_batch(clips, noise_clips, noise_scale, rng)
    return clip_spectra(samples)[:, :, None], labels


def train_epoch(
    state: ModelState,
    train_set: DatasetIndex,
    config: TrainingConfig,
    rng: np.random.Generator,
    global_step: int,
    opt: AdamState | None = None,
) -> tuple[ModelState, float, float, int]:
    """One epoch of batch updates, in place on state.params.

    Returns (state, mean train loss, train accuracy, new global_step).
    """
    if opt is None:
        opt = AdamState()
    entries = train_set.entries
    order = rng.permutation(len(entries))
    total_loss = 0.0
    total_correct = 0
    for start in range(0, len(entries), config.batch_size):
        batch_entries = [entries[i] for i in order[start : start + config.batch_size]]
        spectra, labels = _spectra_batch(
            batch_entries, train_set.noise_clips, config.noise_scale, rng
        )
        probs, cache = forward(state, spectra, mode="train", rng=rng)
        _, losses = softmax_cce(cache.logits, labels)
        grads = backward(state, cache, labels)
        lr = config.lr_at(global_step)
        if config.optimizer == "adam":
            adam_step(state.params, grads, lr, opt)
        else:
            sgd_step(state.params, grads, lr)
        global_step += 1
        total_loss += float(losses.sum())
        total_correct += int((probs.argmax(axis=1) == labels).sum())
    n = len(entries)
    return state, total_loss / n, total_correct / n, global_step


def evaluate(
    state: ModelState,
    val_set: DatasetIndex,
    config: TrainingConfig,
    rng: np.random.Generator,
) -> tuple[float, float]:
    """Inference-mode accuracy and mean loss over augmented validation clips."""
    entries = val_set.entries
    total_loss = 0.0
    total_correct = 0
    for start in range(0, len(entries), EVAL_BATCH):
        batch_entries = entries[start : start + EVAL_BATCH]
        spectra, labels = _spectra_batch(
            batch_entries, val_set.noise_clips, config.noise_scale, rng
        )
        probs, _ = forward(state, spectra, mode="infer")
        picked = probs[np.arange(len(labels)), labels]
        total_loss += float(-np.log(np.maximum(picked, 1e-300)).sum())
        total_correct += int((probs.argmax(axis=1) == labels).sum())
    n = len(entries)
    return total_correct / n, total_loss / n


def output_histograms(state: ModelState, epoch: int) -> list[HistogramSnapshot]:
    """Per-epoch histograms of the output layer's weights and biases.

    Per-class values separating into stable peaks is the convergence
    signal worth watching; 50 uniform bins over that epoch's min/max."""
    snaps = []
    for layer in HISTOGRAM_LAYERS:
        values = state.params[layer].ravel()
        counts, edges = np.histogram(values, bins=HISTOGRAM_BINS)
        snaps.append(
            HistogramSnapshot(
                epoch=epoch,
                layer=layer,
                edges=[float(e) for e in edges],
                counts=[int(c) for c in counts],
            )
        )
    return snaps


def fit(
    state: ModelState,
    train_set: DatasetIndex,
    val_set: DatasetIndex,
    config: TrainingConfig,
    on_epoch: Callable[[EpochMetrics], None] | None = None,
) -> FitResult:
    """Train until validation accuracy stalls for `patience` epochs (or
    max_epochs), then return the best epoch's parameter snapshot."""
    rng = train_rng(config.seed)
    opt = AdamState()
    stopper = EarlyStopper(config.patience)
    metrics: list[EpochMetrics] = []
    histograms: list[HistogramSnapshot] = []
    best_state = state.copy()
    global_step = 0
    for epoch in range(1, config.max_epochs + 1):
        state, train_loss, train_acc, global_step = train_epoch(
            state, train_set, config, rng, global_step, opt
        )
        val_acc, val_loss = evaluate(state, val_set, config, eval_rng(config.seed, epoch))
        metrics.append(
            EpochMetrics(
                epoch=epoch,
                global_step=global_step,
                train_loss=train_loss,
                train_acc=train_acc,
                val_loss=val_loss,
                val_acc=val_acc,
                lr=config.lr_at(global_step),
            )
        )
        histograms.extend(output_histograms(state, epoch))
        if val_acc > stopper.best_acc:
            best_state = state.copy()
        if on_epoch is not None:
            on_epoch(metrics[-1])
        if stopper.update(epoch, val_acc):
            break
    return FitResult(
        state=best_state,
        metrics=metrics,
        histograms=histograms,
        best_epoch=stopper.best_epoch,
        best_val_acc=stopper.best_acc,
    )


METRICS_FILE = "metrics.jsonl"
HISTOGRAMS_FILE = "histograms.jsonl"


def export_metrics(
    metrics: list[EpochMetrics],
    histograms: list[HistogramSnapshot],
    out_dir,
) -> tuple[Path, Path]:
    """Write line-delimited epoch records and histogram records."""
    if not metrics:
        raise ValueError("no metrics to export")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    metrics_path = out / METRICS_FILE
    with metrics_path.open("w") as fh:
        for m in metrics:
            fh.write(json.dumps(dataclasses.asdict(m)) + "\n")
    hist_path = out / HISTOGRAMS_FILE
    with hist_path.open("w") as fh:
        for h in histograms:
            fh.write(json.dumps(dataclasses.asdict(h)) + "\n")
    return metrics_path, hist_path


def read_metrics(path) -> list[EpochMetrics]:
    return [
        EpochMetrics(**json.loads(line))
        for line in Path(path).read_text().splitlines()
        if line.strip()
    ]
