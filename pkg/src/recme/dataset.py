"""Dataset assembly: speaker directories -> labeled clips, noise mixing,
and the seeded 80/20 split.

Directory layout: `<root>/<speaker_name>/*.wav` plus `<root>/_noise/*.wav`.
Directories whose name starts with "_" are never speakers. If the root
holds a `_registry.json` order manifest (written by enrollment), class
indices follow it so retraining preserves existing index -> name bindings;
otherwise speakers are indexed alphabetically. Unlisted directories are
appended alphabetically after the manifest entries.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .audio_io import Clip, decode_wav, preprocess

NOISE_DIR = "_noise"
REGISTRY_FILE = "_registry.json"


class EmptyDataset(ValueError):
    """No speaker audio found under the dataset root."""


class UnreadableFile(ValueError):
    """A WAV file could not be read or decoded."""


class ClassTooSmall(ValueError):
    """A class has too few clips to split."""


@dataclass
class DatasetIndex:
    entries: list[tuple[Clip, int]]  # (clip, class index)
    noise_clips: list[Clip]
    registry: list[str]  # class index -> speaker name

    @property
    def num_classes(self) -> int:
        return len(self.registry)

    def per_class(self) -> dict[int, int]:
        counts = {i: 0 for i in range(self.num_classes)}
        for _, label in self.entries:
            counts[label] += 1
        return counts


def read_registry(root: Path) -> list[str] | None:
    path = Path(root) / REGISTRY_FILE
    if not path.exists():
        return None
    names = json.loads(path.read_text())
    if not isinstance(names, list) or not all(isinstance(n, str) for n in names):
        raise UnreadableFile(f"{path} is not a list of speaker names")
    return names


def write_registry(root: Path, names: list[str]) -> None:
    (Path(root) / REGISTRY_FILE).write_text(json.dumps(names, indent=0) + "\n")


def speaker_order(root: Path) -> list[str]:
    """Speaker directory names in class-index order."""
    root = Path(root)
    dirs = sorted(d.name for d in root.iterdir() if d.is_dir() and not d.name.startswith("_"))
    manifest = read_registry(root) or []
    ordered = [name for name in manifest if name in dirs]
    ordered += [name for name in dirs if name not in ordered]
    return ordered


def _clips_from_dir(directory: Path) -> list[Clip]:
    clips: list[Clip] = []
    for wav_path in sorted(directory.glob("*.wav")):
        try:
            wave = decode_wav(wav_path.read_bytes())
        except (OSError, ValueError) as exc:
            raise UnreadableFile(f"{wav_path}: {exc}") from exc
        clips.extend(preprocess(wave, source_id=str(wav_path)))
    return clips


def build_dataset(root_dir) -> DatasetIndex:
    """Load every speaker directory into labeled clips; `_noise` into
    noise_clips. Raises EmptyDataset when there is nothing to train on."""
    root = Path(root_dir)
    if not root.is_dir():
        raise EmptyDataset(f"{root} is not a directory")
    registry = speaker_order(root)
    entries: list[tuple[Clip, int]] = []
    for label, name in enumerate(registry):
        for clip in _clips_from_dir(root / name):
            entries.append((clip, label))
    if not entries:
        raise EmptyDataset(f"no speaker audio under {root}")
    covered = {label for _, label in entries}
    if covered != set(range(len(registry))):
        missing = [registry[i] for i in sorted(set(range(len(registry))) - covered)]
        raise EmptyDataset(f"speakers with no usable clips: {missing}")

    noise_dir = root / NOISE_DIR
    noise_clips = _clips_from_dir(noise_dir) if noise_dir.is_dir() else []
    return DatasetIndex(entries=entries, noise_clips=noise_clips, registry=registry)


def split(
    index: DatasetIndex, ratio: float, seed: int
) -> tuple[DatasetIndex, DatasetIndex]:
    """Per-class seeded shuffle, then ceil(ratio * n) clips to train and the
    rest to validation (capped so every class keeps at least one val clip)."""
    if not 0.0 < ratio < 1.0:
        raise ValueError("ratio must be in (0, 1)")
    rng = np.random.default_rng(seed)
    by_class: dict[int, list[tuple[Clip, int]]] = {}
    for entry in index.entries:
        by_class.setdefault(entry[1], []).append(entry)

    train_entries: list[tuple[Clip, int]] = []
    val_entries: list[tuple[Clip, int]] = []
    for label in sorted(by_class):
        group = by_class[label]
        if len(group) < 2:
            raise ClassTooSmall(
                f"class {index.registry[label]!r} has {len(group)} clip(s), needs >= 2"
            )
        order = rng.permutation(len(group))
        n_train = min(math.ceil(ratio * len(group)), len(group) - 1)
        for pos in order[:n_train]:
            train_entries.append(group[pos])
        for pos in order[n_train:]:
            val_entries.append(group[pos])

    return (
        DatasetIndex(train_entries, index.noise_clips, index.registry),
        DatasetIndex(val_entries, index.noise_clips, index.registry),
    )


def augment_with_noise(
    clip: Clip,
    noise_clips: list[Clip],
    noise_scale: float,
    rng: np.random.Generator,
) -> Clip:
    """Mix in one randomly chosen noise clip, matched to the clip's peak and
    scaled by s ~ U(0, noise_scale); output clamped to [-1, 1]."""
    if not noise_clips:
        return clip
    noise = noise_clips[int(rng.integers(len(noise_clips)))]
    s = rng.uniform(0.0, noise_scale)
    clip_peak = np.max(np.abs(clip.samples))
    noise_peak = np.max(np.abs(noise.samples))
    if noise_peak == 0.0:
        return clip
    mixed = clip.samples + noise.samples * (clip_peak / noise_peak) * s
    return Clip(np.clip(mixed, -1.0, 1.0), source_id=clip.source_id, index=clip.index)


def augment_batch(
    clips: list[Clip],
    noise_clips: list[Clip],
    noise_scale: float,
    rng: np.random.Generator,
) -> np.ndarray:
    """Stack augmented clips into a [B, 16000] sample matrix."""
    return np.stack(
        [augment_with_noise(c, noise_clips, noise_scale, rng).samples for c in clips]
    )
