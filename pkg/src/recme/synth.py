"""Synthetic speakers and noise for desk-scale training runs.

A synthetic speaker mimics a vowel-like voice: a spectral envelope peaked
at three "formant" frequencies drawn from [200, 3000] Hz, excited by a
mix of a harmonic comb at the speaker's fundamental (the voiced part) and
formant-centered narrowband noise (the breathy part). Each one-second
segment re-draws phases and noise, jitters the fundamental and formants
by up to +-2%, and varies the gain and voicing mix, so clips from one
speaker share a spectral signature without being identical — while
different speakers' spectra still overlap enough that the classifier has
real boundaries to learn (and an unenrolled voice lands between classes
instead of deep inside one). Six noise types are generated alongside:
white, pink-ish, mains hum, clicks, band-limited hiss, and a tone sweep.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import CLIP_LEN, CLIP_RATE
from .audio_io import PcmWave, encode_wav
from .dataset import NOISE_DIR

F0_LOW = 100.0
F0_HIGH = 240.0
F0_CLIP_SPREAD = (0.85, 1.2)  # per-clip pitch range around the speaker's center
PROMINENCE_RANGE = (0.02, 1.0)  # per-clip vowel-like formant emphasis
FORMANT_WEIGHTS = (1.0, 0.85, 0.7)
FORMANT_BANDWIDTH = 90.0  # Hz, envelope peak width
HARMONIC_CEILING = 3800.0  # highest harmonic synthesized
ENVELOPE_FLOOR = 0.02
FORMANT_NOISE_BANDWIDTH = 250.0  # Hz, breathy-part spread around each formant
# quiet master level: keeps the raw-magnitude FFT features (and with them
# the logits of the linearly-scaling network) in a regime where softmax
# stays calibrated instead of pinning at 0/1
SEGMENT_PEAK = 0.02
SEGMENT_NOISE_AMP = 0.001
JITTER = 0.02

# Like human vowels, formants cluster near canonical positions: a speaker
# is a 3-combination of these slots (pairwise sharing at most one slot
# with any other speaker) plus a persistent personal offset. Voices thus
# overlap spectrally — the classifier has real boundaries to learn — yet
# every speaker stays identifiable.
FORMANT_SLOTS = (300.0, 750.0, 1200.0, 1650.0, 2100.0, 2550.0, 3000.0)
SLOT_OFFSET_MAX = 45.0  # Hz, per-speaker persistent deviation from a slot
SLOT_OFFSET_GAP = 30.0  # Hz, min offset distance between sharers of a slot

NOISE_KINDS = ("white", "pink", "hum", "clicks", "hiss", "sweep")


@dataclass(frozen=True)
class VoiceProfile:
    f0: float
    formants: tuple[float, float, float]


def speaker_profiles(seed: int, num_speakers: int) -> list[VoiceProfile]:
    """Deterministic voice profiles.

    Rejection sampling keeps any two speakers' formant combinations
    sharing at most one canonical slot, and speakers who do share a slot
    keep their personal offsets apart, so no enrolled voice is a near
    duplicate of another."""
    if num_speakers > 7:
        raise ValueError("at most 7 speakers fit the pairwise slot constraint")
    rng = np.random.default_rng([seed, 0])
    profiles: list[VoiceProfile] = []
    combos: list[set[int]] = []
    slot_offsets: dict[int, list[float]] = {}
    while len(profiles) < num_speakers:
        combo = sorted(int(i) for i in rng.choice(len(FORMANT_SLOTS), size=3, replace=False))
        if any(len(set(combo) & prior) > 1 for prior in combos):
            continue
        offsets = rng.uniform(-SLOT_OFFSET_MAX, SLOT_OFFSET_MAX, size=3)
        if any(
            abs(offsets[j] - taken) < SLOT_OFFSET_GAP
            for j, slot in enumerate(combo)
            for taken in slot_offsets.get(slot, [])
        ):
            continue
        formants = np.asarray([FORMANT_SLOTS[i] for i in combo]) + offsets
        f0 = float(rng.uniform(F0_LOW, F0_HIGH))
        combos.append(set(combo))
        for j, slot in enumerate(combo):
            slot_offsets.setdefault(slot, []).append(float(offsets[j]))
        profiles.append(VoiceProfile(f0=f0, formants=tuple(float(f) for f in formants)))
    return profiles


def _narrowband_noise(
    center: float, bandwidth: float, t: np.ndarray, rng: np.random.Generator
) -> np.ndarray:
    # Gaussian noise confined near `center`: a slowly varying complex
    # envelope (control points at ~bandwidth rate, linearly interpolated)
    # modulating a carrier.
    duration = t[-1] + t[1]
    n_ctrl = max(4, int(bandwidth * duration)) + 1
    ctrl_t = np.linspace(0.0, duration, n_ctrl)
    re = np.interp(t, ctrl_t, rng.normal(size=n_ctrl))
    im = np.interp(t, ctrl_t, rng.normal(size=n_ctrl))
    angle = 2.0 * np.pi * center * t
    return re * np.cos(angle) - im * np.sin(angle)


def synth_voice_wave(
    profile: VoiceProfile, seconds: int, rng: np.random.Generator
) -> PcmWave:
    """A recording of one synthetic speaker: `seconds` independent segments."""
    t = np.arange(CLIP_LEN) / CLIP_RATE
    segments = []
    for _ in range(seconds):
        # pitch moves a lot clip to clip (speakers' ranges overlap, so the
        # comb position carries little identity); formants barely move
        f0 = profile.f0 * rng.uniform(*F0_CLIP_SPREAD)
        formants = np.asarray(profile.formants) * (1.0 + rng.uniform(-JITTER, JITTER, size=3))
        # each second "says something different": the formants keep their
        # positions but their prominence varies vowel-like per clip, and
        # which formant dominates changes from clip to clip
        weights = rng.permutation(FORMANT_WEIGHTS) * rng.uniform(*PROMINENCE_RANGE, size=3)
        # voiced part: harmonic comb under the formant envelope
        freqs = f0 * np.arange(1, int(HARMONIC_CEILING / f0) + 1)
        envelope = np.full(freqs.shape, ENVELOPE_FLOOR)
        for center, weight in zip(formants, weights):
            envelope += weight * np.exp(-((freqs - center) ** 2) / (2.0 * FORMANT_BANDWIDTH**2))
        phases = rng.uniform(0.0, 2.0 * np.pi, size=freqs.size)
        voiced = (envelope[:, None] * np.sin(
            2.0 * np.pi * freqs[:, None] * t[None, :] + phases[:, None]
        )).sum(axis=0)
        # breathy part: narrowband noise at each formant
        breathy = np.zeros(CLIP_LEN)
        for center, weight in zip(formants, weights):
            breathy += weight * _narrowband_noise(center, FORMANT_NOISE_BANDWIDTH, t, rng)
        voicing = rng.uniform(0.35, 0.75)
        seg = voicing * voiced / np.max(np.abs(voiced))
        seg += (1.0 - voicing) * breathy / np.max(np.abs(breathy))
        gain = SEGMENT_PEAK * rng.uniform(0.7, 1.0)
        seg *= gain / np.max(np.abs(seg))
        seg += rng.normal(scale=SEGMENT_NOISE_AMP, size=CLIP_LEN)
        segments.append(seg)
    samples = np.clip(np.concatenate(segments), -1.0, 1.0)
    return PcmWave(CLIP_RATE, 1, samples)


def _noise_samples(kind: str, n: int, rng: np.random.Generator) -> np.ndarray:
    t = np.arange(n) / CLIP_RATE
    if kind == "white":
        x = rng.normal(size=n)
    elif kind == "pink":
        # octave-held white layers, a cheap pink approximation
        x = np.zeros(n)
        for octave in range(6):
            hold = 1 << octave
            layer = rng.normal(size=(n + hold - 1) // hold)
            x += np.repeat(layer, hold)[:n]
    elif kind == "hum":
        x = np.zeros(n)
        for harmonic, amp in ((1, 1.0), (2, 0.4), (3, 0.2)):
            x += amp * np.sin(2.0 * np.pi * 50.0 * harmonic * t + rng.uniform(0, 2 * np.pi))
        x *= 1.0 + 0.1 * np.sin(2.0 * np.pi * 0.5 * t)
    elif kind == "clicks":
        x = np.zeros(n)
        tail = np.exp(-np.arange(40) / 8.0)
        for _ in range(max(1, 20 * n // CLIP_RATE)):
            pos = int(rng.integers(0, max(1, n - tail.size)))
            x[pos : pos + tail.size] += rng.uniform(0.5, 1.0) * rng.choice((-1.0, 1.0)) * tail
    elif kind == "hiss":
        wide = rng.normal(size=n)
        smooth = np.convolve(wide, np.ones(3) / 3.0, mode="same")
        lows = np.convolve(wide, np.ones(41) / 41.0, mode="same")
        x = smooth - lows
    elif kind == "sweep":
        f0, f1 = 300.0, 4000.0
        duration = n / CLIP_RATE
        phase = 2.0 * np.pi * (f0 * t + (f1 - f0) / (2.0 * duration) * t * t)
        x = np.sin(phase + rng.uniform(0, 2 * np.pi))
    else:
        raise ValueError(f"unknown noise kind {kind!r}")
    peak = np.max(np.abs(x))
    return 0.9 * x / peak if peak > 0 else x


def synth_noise_wave(kind: str, seconds: int, rng: np.random.Generator) -> PcmWave:
    return PcmWave(CLIP_RATE, 1, _noise_samples(kind, seconds * CLIP_RATE, rng))


def held_out_recording(
    seed: int, num_speakers: int, speaker: int, seconds: int, trial: int
) -> PcmWave:
    """Fresh audio of dataset speaker `speaker`, disjoint from the training
    draws (trial picks the rng stream). For identification tests."""
    profile = speaker_profiles(seed, num_speakers)[speaker]
    rng = np.random.default_rng([seed, 3, speaker, trial])
    return synth_voice_wave(profile, seconds, rng)


def synth_dataset(
    num_speakers: int,
    seconds_per_speaker: int,
    seed: int,
    out_dir,
    noise_seconds: int = 12,
) -> Path:
    """Write a ready-to-train dataset directory of synthetic speakers.

    Layout: `<out>/speaker_NN/recording.wav` plus six `<out>/_noise/*.wav`
    files. Byte-identical for identical arguments.
    """
    if num_speakers < 2:
        raise ValueError("need at least 2 speakers")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    profiles = speaker_profiles(seed, num_speakers)
    for i, profile in enumerate(profiles):
        rng = np.random.default_rng([seed, 1, i])
        wave = synth_voice_wave(profile, seconds_per_speaker, rng)
        speaker_dir = out / f"speaker_{i:02d}"
        speaker_dir.mkdir(exist_ok=True)
        (speaker_dir / "recording.wav").write_bytes(encode_wav(wave))
    noise_dir = out / NOISE_DIR
    noise_dir.mkdir(exist_ok=True)
    for j, kind in enumerate(NOISE_KINDS):
        rng = np.random.default_rng([seed, 2, j])
        wave = synth_noise_wave(kind, noise_seconds, rng)
        (noise_dir / f"{kind}.wav").write_bytes(encode_wav(wave))
    return out
