"""Who is speaking: per-clip prediction, majority vote, confidence gate,
and unknown-speaker enrollment.

A recording is preprocessed into 1-second clips; the model predicts each
clip independently; the speaker voted most often wins (ties break to the
lowest class index). Confidence is the mean probability assigned to the
winning class across all clips — below the threshold the verdict is
Unknown, which is the paper-loop trigger for verification/enrollment.
"""

from __future__ import annotations

import os
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .audio_io import PcmWave, encode_wav, preprocess
from .dataset import speaker_order, write_registry
from .features import clip_spectra
from .model import ModelState, forward

DEFAULT_THRESHOLD = 0.5
MIN_ENROLL_SECONDS = 30  # floor that keeps >= 6 validation clips at an 80/20 split


class TooShort(ValueError):
    """Audio too short to act on."""


class InvalidModel(ValueError):
    """Model state unusable for identification."""


class DuplicateName(ValueError):
    """Speaker name already enrolled."""


@dataclass
class PredictionResult:
    per_clip: np.ndarray  # [num_clips, num_classes] probabilities
    votes: dict[int, int]  # class index -> clip count
    winner: int
    confidence: float  # mean winning-class probability over all clips
    decision: str  # "known" | "unknown"
    speaker: str | None  # registry name when known

    def to_dict(self) -> dict:
        return {
            "per_clip": [[float(p) for p in row] for row in self.per_clip],
            "votes": {str(k): int(v) for k, v in sorted(self.votes.items())},
            "winner": int(self.winner),
            "confidence": float(self.confidence),
            "decision": self.decision,
            "speaker": self.speaker,
        }


def tally_votes(
    per_clip: np.ndarray, registry: list[str], threshold: float
) -> PredictionResult:
    """Pure decision rule from per-clip probability vectors.

    Majority vote on argmax, ties to the lowest class index; Known only
    when the winner's mean probability clears the threshold. Invariant to
    clip order.
    """
    per_clip = np.atleast_2d(np.asarray(per_clip, dtype=np.float64))
    if per_clip.shape[1] != len(registry):
        raise InvalidModel(
            f"{per_clip.shape[1]} classes in probabilities vs {len(registry)} names"
        )
    picks = per_clip.argmax(axis=1)
    counts = np.bincount(picks, minlength=len(registry))
    winner = int(counts.argmax())  # argmax takes the lowest index on ties
    confidence = float(per_clip[:, winner].mean())
    known = confidence >= threshold
    return PredictionResult(
        per_clip=per_clip,
        votes={i: int(c) for i, c in enumerate(counts) if c > 0},
        winner=winner,
        confidence=confidence,
        decision="known" if known else "unknown",
        speaker=registry[winner] if known else None,
    )


def identify(
    state: ModelState, wave: PcmWave, threshold: float = DEFAULT_THRESHOLD
) -> PredictionResult:
    """Preprocess a recording, predict every clip, and vote."""
    if state.spec.num_classes != len(state.registry):
        raise InvalidModel("registry does not match the model's class count")
    clips = preprocess(wave)
    if not clips:
        raise TooShort("recording shorter than one second after preprocessing")
    spectra = clip_spectra(np.stack([c.samples for c in clips]))
    probs, _ = forward(state, spectra[:, :, None], mode="infer")
    return tally_votes(probs, state.registry, threshold)


@dataclass
class EnrollmentRequest:
    name: str
    wave: PcmWave


@dataclass
class EnrollmentResult:
    name: str
    class_index: int
    clips_added: int
    registry: list[str]
    retrain_needed: bool = True


def enroll(data_dir, request: EnrollmentRequest) -> EnrollmentResult:
    """Add a new speaker's clips to the datastore.

    Clips land in `<data_dir>/<name>/` and the registry manifest gains the
    name at the next class index, so a later retrain keeps every existing
    index -> name binding. Validation happens before any write; the clip
    directory appears atomically (written to a temp dir, then renamed).
    """
    root = Path(data_dir)
    name = request.name.strip()
    if not name or name.startswith("_") or "/" in name or "\\" in name:
        raise ValueError(f"invalid speaker name {name!r}")
    existing = speaker_order(root)
    if name in existing or (root / name).exists():
        raise DuplicateName(f"speaker {name!r} already enrolled")
    clips = preprocess(request.wave, source_id=f"enroll:{name}")
    if len(clips) < MIN_ENROLL_SECONDS:
        raise TooShort(
            f"enrollment needs >= {MIN_ENROLL_SECONDS}s of audio, got {len(clips)} clip(s)"
        )

    tmp_dir = root / f"_tmp_enroll_{name}"
    tmp_dir.mkdir(parents=True, exist_ok=False)
    for clip in clips:
        wav_bytes = encode_wav(PcmWave(16000, 1, clip.samples))
        (tmp_dir / f"clip_{clip.index:04d}.wav").write_bytes(wav_bytes)
    os.rename(tmp_dir, root / name)

    registry = existing + [name]
    write_registry(root, registry)
    return EnrollmentResult(
        name=name,
        class_index=len(registry) - 1,
        clips_added=len(clips),
        registry=registry,
    )


@dataclass
class Directive:
    """Next action for the application loop."""

    kind: str  # "continue" | "ask_verification" | "start_enrollment"
    speaker: str | None
    overridden: bool
    result: PredictionResult


def decision_loop(
    state: ModelState,
    wave: PcmWave,
    threshold: float = DEFAULT_THRESHOLD,
    verification: bool | None = None,
) -> Directive:
    """One pass of the decision flow, as a pure function.

    Known -> continue with that speaker. Unknown -> ask for verification;
    a confirming answer continues as the best guess despite low confidence
    (user override), a rejection starts enrollment.
    """
    result = identify(state, wave, threshold)
    best_guess = state.registry[result.winner]
    if result.decision == "known":
        return Directive("continue", result.speaker, False, result)
    if verification is None:
        return Directive("ask_verification", best_guess, False, result)
    if verification:
        return Directive("continue", best_guess, True, result)
    return Directive("start_enrollment", None, False, result)
