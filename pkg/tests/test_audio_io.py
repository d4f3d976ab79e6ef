import struct

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from recme.audio_io import (
    Clip,
    MalformedContainer,
    PcmWave,
    UnsupportedEncoding,
    clip_into_seconds,
    decode_wav,
    downmix_mono,
    encode_wav,
    resample,
)
from recme.features import rfft_magnitude


def wav_bytes(payload: bytes, fmt_tag=1, channels=1, rate=16000, bits=16) -> bytes:
    block = channels * bits // 8
    header = struct.pack(
        "<4sI4s4sIHHIIHH4sI",
        b"RIFF", 36 + len(payload), b"WAVE",
        b"fmt ", 16, fmt_tag, channels, rate, rate * block, block, bits,
        b"data", len(payload),
    )
    return header + payload


class TestDecode:
    def test_16bit_fullscale_positive(self):
        wave = decode_wav(wav_bytes(struct.pack("<h", 32767)))
        assert wave.samples[0] == pytest.approx(32767 / 32768)

    def test_16bit_zero(self):
        wave = decode_wav(wav_bytes(struct.pack("<h", 0)))
        assert wave.samples[0] == 0.0

    def test_8bit_unsigned(self):
        wave = decode_wav(wav_bytes(bytes([128, 255, 0]), bits=8))
        assert wave.samples == pytest.approx([0.0, 127 / 128, -1.0])

    def test_24bit(self):
        payload = b"".join(
            struct.pack("<i", v)[:3] for v in [(1 << 23) - 1, -(1 << 23), 0]
        )
        wave = decode_wav(wav_bytes(payload, bits=24))
        assert wave.samples == pytest.approx([((1 << 23) - 1) / (1 << 23), -1.0, 0.0])

    def test_32bit_int(self):
        payload = struct.pack("<ii", (1 << 31) - 1, -(1 << 31))
        wave = decode_wav(wav_bytes(payload, bits=32))
        assert wave.samples == pytest.approx([((1 << 31) - 1) / (1 << 31), -1.0])

    def test_float32(self):
        payload = struct.pack("<fff", 0.5, -0.25, 2.0)  # out-of-range is clamped
        wave = decode_wav(wav_bytes(payload, fmt_tag=3, bits=32))
        assert wave.samples == pytest.approx([0.5, -0.25, 1.0])

    def test_stereo_metadata(self):
        payload = struct.pack("<hhhh", 100, -100, 200, -200)
        wave = decode_wav(wav_bytes(payload, channels=2, rate=44100))
        assert wave.channels == 2
        assert wave.sample_rate == 44100
        assert wave.num_frames == 2

    def test_bad_magic(self):
        with pytest.raises(MalformedContainer):
            decode_wav(b"OGGS" + b"\x00" * 40)

    def test_truncated_chunk(self):
        data = wav_bytes(struct.pack("<h", 1))
        with pytest.raises(MalformedContainer):
            decode_wav(data[:-1])

    def test_missing_data_chunk(self):
        header_only = wav_bytes(b"")[:36]  # fmt chunk intact, data header cut
        with pytest.raises(MalformedContainer):
            decode_wav(header_only)

    def test_compressed_rejected(self):
        with pytest.raises(UnsupportedEncoding):
            decode_wav(wav_bytes(b"\x00\x00", fmt_tag=0x0002))  # ADPCM

    def test_extensible_pcm_accepted(self):
        ext = struct.pack("<HHIIHH", 0xFFFE, 1, 16000, 32000, 2, 16)
        # cbSize, valid bits, channel mask, then the sub-format GUID
        ext += struct.pack("<HHI", 22, 16, 0) + struct.pack("<H", 1) + b"\x00" * 14
        payload = struct.pack("<h", 16384)
        data = (
            b"RIFF" + struct.pack("<I", 4 + 8 + len(ext) + 8 + len(payload)) + b"WAVE"
            + b"fmt " + struct.pack("<I", len(ext)) + ext
            + b"data" + struct.pack("<I", len(payload)) + payload
        )
        wave = decode_wav(data)
        assert wave.samples[0] == pytest.approx(0.5)


class TestEncodeRoundtrip:
    def test_zero_sample(self):
        data = encode_wav(PcmWave(16000, 1, np.array([0.0])))
        assert data[-2:] == struct.pack("<h", 0)

    def test_fullscale_clamps(self):
        data = encode_wav(PcmWave(16000, 1, np.array([1.0])))
        assert data[-2:] == struct.pack("<h", 32767)

    def test_sine_roundtrip(self):
        t = np.arange(16000) / 16000
        signal = 0.8 * np.sin(2 * np.pi * 440 * t)
        back = decode_wav(encode_wav(PcmWave(16000, 1, signal)))
        assert back.sample_rate == 16000
        assert np.max(np.abs(back.samples - signal)) <= 1 / 32768

    @settings(max_examples=50, deadline=None)
    @given(
        st.lists(
            st.floats(min_value=-1.0, max_value=1.0, allow_nan=False), min_size=1, max_size=300
        )
    )
    def test_roundtrip_any_length(self, samples):
        wave = PcmWave(16000, 1, np.array(samples))
        back = decode_wav(encode_wav(wave))
        assert back.samples.size == len(samples)
        assert np.max(np.abs(back.samples - wave.samples)) <= 1 / 32768


class TestDownmix:
    def test_stereo_mean(self):
        wave = PcmWave(16000, 2, np.array([0.5, -0.5, 0.2, 0.4]))
        mono = downmix_mono(wave)
        assert mono.channels == 1
        assert mono.samples == pytest.approx([0.0, 0.3])

    def test_mono_unchanged(self):
        wave = PcmWave(16000, 1, np.array([0.1, 0.2]))
        assert downmix_mono(wave) is wave


class TestResample:
    def test_doubles_length(self):
        wave = PcmWave(8000, 1, np.zeros(8000))
        out = resample(wave, 16000)
        assert out.sample_rate == 16000
        assert out.samples.size == 16000

    def test_identity_rate(self):
        wave = PcmWave(16000, 1, np.linspace(-1, 1, 100))
        out = resample(wave, 16000)
        assert np.array_equal(out.samples, wave.samples)

    def test_preserves_duration(self, rng):
        for source, target in [(44100, 16000), (8000, 16000), (22050, 16000)]:
            n = int(source * 1.37)
            wave = PcmWave(source, 1, rng.uniform(-1, 1, n))
            out = resample(wave, target)
            assert abs(out.samples.size / target - n / source) < 1 / target

    def test_tone_keeps_spectral_peak(self):
        # 440 Hz at 44.1 kHz resampled to 16 kHz: bin 440 of a 1 s window
        t = np.arange(44100) / 44100
        wave = PcmWave(44100, 1, 0.7 * np.sin(2 * np.pi * 440 * t))
        out = resample(wave, 16000)
        spectrum = rfft_magnitude(out.samples[:16000])
        assert int(np.argmax(spectrum)) == 440


class TestClipping:
    def test_sixty_second_recording(self):
        wave = PcmWave(16000, 1, np.zeros(960000))
        assert len(clip_into_seconds(wave)) == 60

    def test_remainder_dropped(self):
        wave = PcmWave(16000, 1, np.zeros(960000 + 8000))
        assert len(clip_into_seconds(wave)) == 60

    def test_short_input_empty(self):
        wave = PcmWave(16000, 1, np.zeros(8000))
        assert clip_into_seconds(wave) == []

    def test_concatenation_matches_prefix(self, rng):
        samples = rng.uniform(-1, 1, 16000 * 3 + 123)
        clips = clip_into_seconds(PcmWave(16000, 1, samples), source_id="x")
        rebuilt = np.concatenate([c.samples for c in clips])
        assert np.array_equal(rebuilt, samples[: 16000 * 3])
        assert [c.index for c in clips] == [0, 1, 2]

    def test_clip_length_enforced(self):
        with pytest.raises(ValueError):
            Clip(np.zeros(15999))
