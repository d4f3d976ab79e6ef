"""FFT magnitude features.

A one-second clip (16000 samples) becomes the magnitudes of the first
8000 bins of its 16000-point discrete Fourier transform; bin k is k Hz.
16000 = 2^7 * 5^3 is not a power of two, so the transform is a recursive
mixed-radix Cooley-Tukey that splits on prime factors, with Bluestein's
algorithm as the fallback for large prime lengths. No zero-padding: that
would change the bin count and bin spacing.

Magnitudes are raw (no log scaling, no normalization) and include DC.
"""

from __future__ import annotations

from functools import lru_cache

import numpy as np

from . import CLIP_LEN, FEAT_LEN
from .audio_io import Clip

# Prime lengths up to this are cheaper by direct DFT than by Bluestein.
_DIRECT_MAX = 61


def _smallest_prime_factor(n: int) -> int:
    if n % 2 == 0:
        return 2
    f = 3
    while f * f <= n:
        if n % f == 0:
            return f
        f += 2
    return n


@lru_cache(maxsize=None)
def _dft_matrix(n: int) -> np.ndarray:
    k = np.arange(n)
    return np.exp(-2j * np.pi * (k[:, None] * k[None, :] % n) / n)


@lru_cache(maxsize=None)
def _twiddles(n: int, p: int) -> np.ndarray:
    # exp(-2*pi*i * j2*k1 / n) for the four-step combine, shape [n/p, p]
    j2 = np.arange(n // p)
    k1 = np.arange(p)
    return np.exp(-2j * np.pi * np.outer(j2, k1) / n)


def _direct_dft(x: np.ndarray) -> np.ndarray:
    return x @ _dft_matrix(x.shape[-1]).T


def _bluestein(x: np.ndarray) -> np.ndarray:
    # DFT of arbitrary length n as a circular convolution of length 2^m.
    n = x.shape[-1]
    m = 1
    while m < 2 * n - 1:
        m *= 2
    j = np.arange(n)
    w = np.exp(-1j * np.pi * (j * j % (2 * n)) / n)  # chirp
    a = np.zeros(x.shape[:-1] + (m,), dtype=np.complex128)
    a[..., :n] = x * w
    b = np.zeros(m, dtype=np.complex128)
    b[0] = 1.0
    b[1:n] = np.conj(w[1:])
    b[m - n + 1 :] = np.conj(w[1:])[::-1]
    conv = _ifft(_fft_rec(a) * _fft_rec(b))
    return w * conv[..., :n]


def _fft_rec(x: np.ndarray) -> np.ndarray:
    # Four-step Cooley-Tukey on n = p*m with j = m*j1 + j2, k = k1 + p*k2:
    # a p-point DFT stage, twiddles, then a batched m-point DFT stage.
    n = x.shape[-1]
    if n == 1:
        return x.copy()
    p = _smallest_prime_factor(n)
    if p == n:
        return _direct_dft(x) if n <= _DIRECT_MAX else _bluestein(x)
    m = n // p
    lead = x.shape[:-1]
    if p == 2:
        e, o = x[..., :m], x[..., m:]
        f = np.stack([e + o, (e - o) * _twiddles(n, 2)[:, 1]], axis=-2)
    else:
        g = np.swapaxes(x.reshape(lead + (p, m)), -1, -2)      # [..., j2, j1]
        f = np.swapaxes((g @ _dft_matrix(p).T) * _twiddles(n, p), -1, -2)
    u = _fft_rec(f)                                            # [..., k1, k2]
    return np.swapaxes(u, -1, -2).reshape(lead + (n,))


@lru_cache(maxsize=None)
def _half_twiddle(n: int) -> np.ndarray:
    return np.exp(-2j * np.pi * np.arange(n // 2) / n)


def _real_fft_half(x: np.ndarray) -> np.ndarray:
    # Two-for-one real transform: pack even/odd samples into one complex
    # FFT of length n/2, then untangle. Returns bins 0..n/2-1.
    n = x.shape[-1]
    if n % 2:
        return _fft_rec(x.astype(np.complex128))[..., : n // 2]
    z = x[..., 0::2] + 1j * x[..., 1::2]
    zf = _fft_rec(z)
    zc = np.conj(np.roll(zf[..., ::-1], 1, axis=-1))  # conj(Z[(h-k) mod h])
    even = 0.5 * (zf + zc)
    odd = -0.5j * (zf - zc)
    return even + _half_twiddle(n) * odd


def _ifft(x: np.ndarray) -> np.ndarray:
    return np.conj(_fft_rec(np.conj(x))) / x.shape[-1]


def fft(samples) -> np.ndarray:
    """Complex DFT over the last axis, any length >= 1, O(n log n)."""
    x = np.asarray(samples)
    if x.shape[-1] < 1:
        raise ValueError("fft needs at least one sample")
    return _fft_rec(x.astype(np.complex128))


def rfft_magnitude(clip: Clip | np.ndarray) -> np.ndarray:
    """FFT magnitude feature vector of one clip: bins 0..7999, bin k = k Hz."""
    samples = clip.samples if isinstance(clip, Clip) else np.asarray(clip, dtype=np.float64)
    if samples.shape != (CLIP_LEN,):
        raise ValueError(f"expected exactly {CLIP_LEN} samples")
    return np.abs(_real_fft_half(samples))


def clip_spectra(batch: np.ndarray) -> np.ndarray:
    """rfft_magnitude over a batch: [B, 16000] -> [B, 8000]."""
    batch = np.asarray(batch, dtype=np.float64)
    if batch.ndim != 2 or batch.shape[1] != CLIP_LEN:
        raise ValueError(f"expected [B, {CLIP_LEN}]")
    return np.abs(_real_fft_half(batch))


def dft_oracle(samples) -> np.ndarray:
    """Direct-summation DFT, X[k] = sum_t x[t] e^(-2*pi*i*k*t/n).

    Quadratic; exists to cross-check the fast transform in tests. Work is
    chunked over output bins to bound memory at large n.
    """
    x = np.asarray(samples, dtype=np.complex128)
    n = x.size
    t = np.arange(n, dtype=np.int64)
    out = np.empty(n, dtype=np.complex128)
    step = max(1, (1 << 22) // max(n, 1))
    for start in range(0, n, step):
        k = np.arange(start, min(start + step, n), dtype=np.int64)
        out[start : start + k.size] = np.exp(-2j * np.pi * (k[:, None] * t % n) / n) @ x
    return out
