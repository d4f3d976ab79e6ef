import numpy as np
import pytest

from recme.features import _real_fft_half, dft_oracle, fft, rfft_magnitude


class TestOracle:
    def test_impulse(self):
        assert dft_oracle([1, 0, 0, 0]) == pytest.approx(np.ones(4))

    def test_constant(self):
        assert dft_oracle([1, 1, 1, 1]) == pytest.approx([4, 0, 0, 0])

    def test_parseval(self, rng):
        x = rng.normal(size=1000)
        spectrum = dft_oracle(x)
        time_energy = np.sum(np.abs(x) ** 2)
        freq_energy = np.sum(np.abs(spectrum) ** 2) / x.size
        assert abs(time_energy - freq_energy) / time_energy < 1e-9


class TestFastTransform:
    @pytest.mark.parametrize("n", [1, 2, 3, 4, 5, 8, 12, 16, 30, 101, 128, 359, 1000])
    def test_matches_oracle(self, rng, n):
        x = rng.normal(size=n) + 1j * rng.normal(size=n)
        mine = fft(x)
        reference = dft_oracle(x)
        scale = np.max(np.abs(reference))
        assert np.max(np.abs(mine - reference)) <= 1e-6 * scale

    def test_linearity(self, rng):
        x = rng.normal(size=240)
        y = rng.normal(size=240)
        a, b = 2.7, -0.3
        combined = fft(a * x + b * y)
        separate = a * fft(x) + b * fft(y)
        scale = np.max(np.abs(separate))
        assert np.max(np.abs(combined - separate)) <= 1e-9 * scale

    def test_real_input_conjugate_symmetry(self, rng):
        x = rng.normal(size=1000)
        spectrum = fft(x)
        n = x.size
        for k in range(1, 20):
            assert spectrum[n - k] == pytest.approx(np.conj(spectrum[k]), rel=1e-9)

    def test_parseval_full_transform(self, rng):
        x = rng.normal(size=16000)
        spectrum = fft(x)
        time_energy = np.sum(np.abs(x) ** 2)
        freq_energy = np.sum(np.abs(spectrum) ** 2) / x.size
        assert abs(time_energy - freq_energy) / time_energy < 1e-9

    def test_batched_equals_rowwise(self, rng):
        batch = rng.normal(size=(3, 128))
        together = fft(batch)
        for row in range(3):
            assert together[row] == pytest.approx(fft(batch[row]))

    def test_half_spectrum_matches_oracle(self, rng):
        for n in (16, 128, 1000):
            x = rng.normal(size=n)
            half = _real_fft_half(x)
            reference = dft_oracle(x)[: n // 2]
            scale = np.max(np.abs(reference))
            assert np.max(np.abs(half - reference)) <= 1e-6 * scale


class TestClipFeatures:
    def test_impulse_all_ones(self):
        clip = np.zeros(16000)
        clip[0] = 1.0
        assert rfft_magnitude(clip) == pytest.approx(np.ones(8000))

    def test_pure_tone_bin(self):
        t = np.arange(16000) / 16000
        clip = np.cos(2 * np.pi * 1000 * t)
        spectrum = rfft_magnitude(clip)
        assert spectrum.shape == (8000,)
        assert int(np.argmax(spectrum)) == 1000
        assert spectrum[1000] == pytest.approx(8000.0, rel=1e-9)

    def test_rejects_wrong_length(self):
        with pytest.raises(ValueError):
            rfft_magnitude(np.zeros(8000))

    def test_nonnegative_finite(self, rng):
        spectrum = rfft_magnitude(rng.uniform(-1, 1, 16000))
        assert np.all(spectrum >= 0)
        assert np.all(np.isfinite(spectrum))
