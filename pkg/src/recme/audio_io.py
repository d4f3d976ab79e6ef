"""WAV decode/encode, mono downmix, resampling, and 1-second clipping.

All audio is carried as float64 in [-1, 1]. Multichannel data is
interleaved. The training/prediction unit is a Clip: exactly one second
of mono 16 kHz audio (16000 samples).
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from . import CLIP_LEN, CLIP_RATE


class MalformedContainer(ValueError):
    """Not a parseable RIFF/WAVE container."""


class UnsupportedEncoding(ValueError):
    """WAVE format tag or sample width we do not decode."""


@dataclass
class PcmWave:
    sample_rate: int
    channels: int
    samples: np.ndarray  # float64, interleaved by channel

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=np.float64)
        if self.sample_rate <= 0:
            raise ValueError("sample_rate must be positive")
        if self.channels < 1:
            raise ValueError("channels must be >= 1")
        if self.samples.size % self.channels != 0:
            raise ValueError("sample count must be a multiple of channels")
        if self.samples.size and not np.isfinite(self.samples).all():
            raise ValueError("samples must be finite")

    @property
    def num_frames(self) -> int:
        return self.samples.size // self.channels

    @property
    def duration(self) -> float:
        return self.num_frames / self.sample_rate


@dataclass
class Clip:
    samples: np.ndarray  # float64, exactly CLIP_LEN mono samples
    source_id: str = ""
    index: int = 0

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=np.float64)
        if self.samples.shape != (CLIP_LEN,):
            raise ValueError(f"a clip is exactly {CLIP_LEN} mono samples")


# WAVE format tags we understand. EXTENSIBLE wraps one of the other two.
_FMT_PCM = 0x0001
_FMT_FLOAT = 0x0003
_FMT_EXTENSIBLE = 0xFFFE


def decode_wav(data: bytes) -> PcmWave:
    """Decode a RIFF/WAVE byte string into normalized float samples.

    Accepts 8/16/24/32-bit integer PCM and 32-bit float. Integer samples
    are scaled by the encoding's max magnitude (e.g. 1/32768 for 16-bit),
    so +32767 maps to just under +1.0.
    """
    if len(data) < 12 or data[0:4] != b"RIFF" or data[8:12] != b"WAVE":
        raise MalformedContainer("missing RIFF/WAVE magic")

    fmt = None
    payload = None
    pos = 12
    while pos + 8 <= len(data):
        cid = data[pos : pos + 4]
        (size,) = struct.unpack_from("<I", data, pos + 4)
        body = data[pos + 8 : pos + 8 + size]
        if len(body) < size:
            raise MalformedContainer(f"chunk {cid!r} truncated")
        if cid == b"fmt ":
            fmt = body
        elif cid == b"data":
            payload = body
        pos += 8 + size + (size & 1)  # chunks are word-aligned

    if fmt is None or payload is None:
        raise MalformedContainer("missing fmt or data chunk")
    if len(fmt) < 16:
        raise MalformedContainer("fmt chunk too short")

    tag, channels, rate, _, _, bits = struct.unpack_from("<HHIIHH", fmt, 0)
    if tag == _FMT_EXTENSIBLE:
        if len(fmt) < 26:
            raise MalformedContainer("extensible fmt chunk too short")
        (tag,) = struct.unpack_from("<H", fmt, 24)  # first bytes of SubFormat GUID
    if tag not in (_FMT_PCM, _FMT_FLOAT):
        raise UnsupportedEncoding(f"format tag 0x{tag:04x} is not PCM or float")
    if channels < 1 or rate == 0:
        raise MalformedContainer("bad channel count or sample rate")

    if tag == _FMT_FLOAT:
        if bits != 32:
            raise UnsupportedEncoding(f"{bits}-bit float is not supported")
        samples = np.frombuffer(payload[: len(payload) // 4 * 4], dtype="<f4")
        samples = np.clip(samples.astype(np.float64), -1.0, 1.0)
    elif bits == 8:
        samples = (np.frombuffer(payload, dtype=np.uint8).astype(np.float64) - 128.0) / 128.0
    elif bits == 16:
        samples = np.frombuffer(payload[: len(payload) // 2 * 2], dtype="<i2")
        samples = samples.astype(np.float64) / 32768.0
    elif bits == 24:
        raw = np.frombuffer(payload[: len(payload) // 3 * 3], dtype=np.uint8).reshape(-1, 3)
        vals = (
            raw[:, 0].astype(np.int32)
            | (raw[:, 1].astype(np.int32) << 8)
            | (raw[:, 2].astype(np.int32) << 16)
        )
        vals = np.where(vals >= 1 << 23, vals - (1 << 24), vals)
        samples = vals.astype(np.float64) / float(1 << 23)
    elif bits == 32:
        samples = np.frombuffer(payload[: len(payload) // 4 * 4], dtype="<i4")
        samples = samples.astype(np.float64) / float(1 << 31)
    else:
        raise UnsupportedEncoding(f"{bits}-bit PCM is not supported")

    usable = samples.size // channels * channels
    return PcmWave(sample_rate=int(rate), channels=int(channels), samples=samples[:usable])


def encode_wav(wave: PcmWave) -> bytes:
    """Encode as 16-bit PCM RIFF/WAVE. Amplitudes are clamped to [-1, 1]."""
    quantized = np.clip(np.round(wave.samples * 32768.0), -32768, 32767).astype("<i2")
    payload = quantized.tobytes()
    block_align = 2 * wave.channels
    header = struct.pack(
        "<4sI4s4sIHHIIHH4sI",
        b"RIFF",
        36 + len(payload),
        b"WAVE",
        b"fmt ",
        16,
        _FMT_PCM,
        wave.channels,
        wave.sample_rate,
        wave.sample_rate * block_align,
        block_align,
        16,
        b"data",
        len(payload),
    )
    return header + payload


def downmix_mono(wave: PcmWave) -> PcmWave:
    """Average the channels. Mono input is returned unchanged."""
    if wave.channels == 1:
        return wave
    frames = wave.samples.reshape(-1, wave.channels)
    return PcmWave(wave.sample_rate, 1, frames.mean(axis=1))


def resample(wave: PcmWave, target_rate: int) -> PcmWave:
    """Linear-interpolation resample of a mono wave.

    Output length is floor(n * target/source); output sample i is the
    input evaluated at time i/target_rate. Voice-band content at the
    rates used here does not warrant a windowed-sinc kernel.
    """
    if wave.channels != 1:
        raise ValueError("resample expects mono input")
    if target_rate <= 0:
        raise ValueError("target_rate must be positive")
    if target_rate == wave.sample_rate:
        return wave
    out_len = wave.samples.size * target_rate // wave.sample_rate
    positions = np.arange(out_len) * (wave.sample_rate / target_rate)
    out = np.interp(positions, np.arange(wave.samples.size), wave.samples)
    return PcmWave(target_rate, 1, out)


def clip_into_seconds(wave: PcmWave, source_id: str = "") -> list[Clip]:
    """Cut a mono 16 kHz wave into whole 1-second clips; the tail remainder
    (< 1 s) is discarded. A wave shorter than one second yields no clips."""
    if wave.channels != 1:
        raise ValueError("clip_into_seconds expects mono input")
    if wave.sample_rate != CLIP_RATE:
        raise ValueError(f"clip_into_seconds expects {CLIP_RATE} Hz input")
    n = wave.samples.size // CLIP_LEN
    return [
        Clip(wave.samples[i * CLIP_LEN : (i + 1) * CLIP_LEN], source_id=source_id, index=i)
        for i in range(n)
    ]


def preprocess(wave: PcmWave, source_id: str = "") -> list[Clip]:
    """Full ingest chain: downmix -> resample to 16 kHz -> 1 s clips."""
    return clip_into_seconds(resample(downmix_mono(wave), CLIP_RATE), source_id=source_id)
