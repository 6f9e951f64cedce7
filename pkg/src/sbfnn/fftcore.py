"""Discrete Fourier transforms along axis 0, any length, pure numpy.

Power-of-two lengths use an iterative radix-2 Cooley-Tukey pass; every
other length goes through the Bluestein chirp-z reduction to a zero-padded
radix-2 convolution.  All transforms are vectorized over trailing axes,
which is how the network applies them per hidden channel.

Conventions: ``fft`` is the unnormalized forward DFT
(X_k = sum_j x_j e^{-2 pi i jk/n}); ``ifft`` divides by n.
"""

from __future__ import annotations

import numpy as np

_bitrev_cache: dict[int, np.ndarray] = {}
_twiddle_cache: dict[int, list[np.ndarray]] = {}
_chirp_cache: dict[int, tuple[np.ndarray, np.ndarray, int]] = {}


def _is_pow2(n: int) -> bool:
    return n >= 1 and (n & (n - 1)) == 0


def _bitrev(n: int) -> np.ndarray:
    perm = _bitrev_cache.get(n)
    if perm is None:
        bits = n.bit_length() - 1
        idx = np.arange(n)
        perm = np.zeros(n, dtype=np.intp)
        for _ in range(bits):
            perm = (perm << 1) | (idx & 1)
            idx >>= 1
        _bitrev_cache[n] = perm
    return perm


def _twiddles(n: int) -> list[np.ndarray]:
    tw = _twiddle_cache.get(n)
    if tw is None:
        tw = []
        size = 2
        while size <= n:
            half = size // 2
            tw.append(np.exp(-2j * np.pi * np.arange(half) / size))
            size *= 2
        _twiddle_cache[n] = tw
    return tw


def _fft_pow2(x: np.ndarray) -> np.ndarray:
    n = x.shape[0]
    if n == 1:
        return x.astype(np.complex128, copy=True)
    a = np.ascontiguousarray(x[_bitrev(n)], dtype=np.complex128)
    trailing = a.shape[1:]
    stage_tw = _twiddles(n)
    size = 2
    for tw in stage_tw:
        half = size // 2
        a = a.reshape((n // size, size) + trailing)
        even = a[:, :half]
        odd = a[:, half:] * tw.reshape((1, half) + (1,) * len(trailing))
        a = np.concatenate((even + odd, even - odd), axis=1)
        size *= 2
    return a.reshape((n,) + trailing)


def _chirp(n: int) -> tuple[np.ndarray, np.ndarray, int]:
    cached = _chirp_cache.get(n)
    if cached is None:
        padded = 1 << (2 * n - 1).bit_length()
        j = np.arange(n)
        # j^2 mod 2n keeps the phase argument small without changing e^{-i pi j^2 / n}
        w = np.exp(-1j * np.pi * ((j * j) % (2 * n)) / n)
        b = np.zeros(padded, dtype=np.complex128)
        b[:n] = np.conj(w)
        if n > 1:
            b[padded - (n - 1):] = np.conj(w)[1:][::-1]
        cached = (w, _fft_pow2(b), padded)
        _chirp_cache[n] = cached
    return cached


def _fft_bluestein(x: np.ndarray) -> np.ndarray:
    n = x.shape[0]
    w, b_spec, padded = _chirp(n)
    shape = (n,) + (1,) * (x.ndim - 1)
    a = np.zeros((padded,) + x.shape[1:], dtype=np.complex128)
    a[:n] = x * w.reshape(shape)
    conv = _ifft_pow2(_fft_pow2(a) * b_spec.reshape((padded,) + (1,) * (x.ndim - 1)))
    return conv[:n] * w.reshape(shape)


def _ifft_pow2(x: np.ndarray) -> np.ndarray:
    return np.conj(_fft_pow2(np.conj(x))) / x.shape[0]


def fft(x: np.ndarray) -> np.ndarray:
    """Unnormalized forward DFT along axis 0, arbitrary length >= 1."""
    x = np.asarray(x)
    n = x.shape[0]
    if _is_pow2(n):
        return _fft_pow2(x)
    return _fft_bluestein(x)


def ifft(x: np.ndarray) -> np.ndarray:
    """Normalized inverse DFT along axis 0 (ifft(fft(v)) == v)."""
    x = np.asarray(x)
    return np.conj(fft(np.conj(x))) / x.shape[0]


def rfft_half(x: np.ndarray) -> np.ndarray:
    """Non-negative-frequency half of the DFT of real input: floor(n/2)+1 rows."""
    n = x.shape[0]
    return fft(x.astype(np.complex128))[: n // 2 + 1]


def extend_hermitian(s: np.ndarray, n: int) -> np.ndarray:
    """Expand a half spectrum (floor(n/2)+1 rows) to the full length-n spectrum."""
    m = n // 2 + 1
    if s.shape[0] != m:
        raise ValueError(f"half spectrum has {s.shape[0]} rows, expected {m} for n={n}")
    full = np.zeros((n,) + s.shape[1:], dtype=np.complex128)
    full[:m] = s
    tail = (n - 1) // 2
    if tail >= 1:
        full[n - tail:] = np.conj(s[1:tail + 1][::-1])
    return full


def irfft_half(s: np.ndarray, n: int) -> np.ndarray:
    """Normalized inverse of ``rfft_half`` returning a real length-n signal."""
    return np.real(ifft(extend_hermitian(s, n)))
