"""Differentiable half-spectrum transforms along the sample axis.

The forward transform is the unnormalized DFT restricted to non-negative
frequencies; the inverse is normalized so ``irfft(rfft(v), n) == v``.
Backward rules are the adjoints of the respective R-linear maps, which is
what makes gradient flow through a Fourier layer exact: for the forward
half transform the cotangent pullback is Re(F^H g), and for the inverse it
is the scaled forward transform with double weight on the mirrored modes.

Transforms apply along axis 0 (the sample axis), vectorized over hidden
channels in axis 1.
"""

from __future__ import annotations

import numpy as np

from . import fftcore
from .autodiff import ContractError, Tensor, _make, as_tensor


def half_len(n: int) -> int:
    return n // 2 + 1


def _mode_weights(n: int) -> np.ndarray:
    """Parseval weights: 1 for DC (and Nyquist when n is even), 2 elsewhere."""
    m = half_len(n)
    c = np.full(m, 2.0)
    c[0] = 1.0
    if n % 2 == 0:
        c[-1] = 1.0
    return c


def rfft(v) -> Tensor:
    """Half-spectrum DFT of a real (n,) or (n, H) tensor along axis 0."""
    v = as_tensor(v)
    n = v.shape[0]
    if n < 2:
        raise ContractError(f"rfft requires length >= 2, got {n}")
    out = fftcore.rfft_half(v.data)

    def vjp(g):
        padded = np.zeros((n,) + g.shape[1:], dtype=np.complex128)
        padded[: g.shape[0]] = np.conj(g)
        return (np.real(fftcore.fft(padded)),)

    return _make(out, (v,), vjp, "rfft")


def irfft(s, n: int) -> Tensor:
    """Real inverse of a half spectrum; requires s to have floor(n/2)+1 rows."""
    s = as_tensor(s)
    if s.shape[0] != half_len(n):
        raise ContractError(
            f"half spectrum has {s.shape[0]} rows, inconsistent with length {n}")
    out = fftcore.irfft_half(s.data, n)
    c = _mode_weights(n)
    cshape = (c.size,) + (1,) * (s.data.ndim - 1)

    def vjp(g):
        return (fftcore.rfft_half(g) * (c.reshape(cshape) / n),)

    return _make(out, (s,), vjp, "irfft")


def truncate_modes(s, modes: int) -> Tensor:
    """Zero all but the lowest `modes` frequencies; shape is unchanged."""
    s = as_tensor(s)
    if modes < 1:
        raise ContractError(f"mode count must be >= 1, got {modes}")
    keep = min(modes, s.shape[0])
    out = np.zeros_like(s.data)
    out[:keep] = s.data[:keep]

    def vjp(g):
        gs = np.zeros_like(s.data)
        gs[:keep] = g[:keep]
        return (gs,)

    return _make(out, (s,), vjp, "truncate_modes")


def channel_mix(s, w_re, w_im) -> Tensor:
    """Per-mode channel mixing: out[k, i] = sum_j (w_re + i w_im)[i, j, k] s[k, j].

    Only the first M modes (the depth of the weight stack) are produced;
    higher rows are zero, matching a spectrum that was already truncated.
    Weights are stored as separate real/imaginary tensors so every trainable
    parameter stays real.
    """
    s, w_re, w_im = as_tensor(s), as_tensor(w_re), as_tensor(w_im)
    h = s.shape[1]
    if w_re.shape != w_im.shape or w_re.shape[0] != h or w_re.shape[1] != h:
        raise ContractError(
            f"channel weights {w_re.shape} incompatible with spectrum {s.shape}")
    m = min(w_re.shape[2], s.shape[0])
    w = w_re.data[:, :, :m] + 1j * w_im.data[:, :, :m]
    out = np.zeros_like(s.data)
    out[:m] = np.einsum("ijk,kj->ki", w, s.data[:m])

    def vjp(g):
        ga = g[:m]
        gs = np.zeros_like(s.data)
        gs[:m] = np.einsum("ijk,ki->kj", np.conj(w), ga)
        gw = np.einsum("ki,kj->ijk", ga, np.conj(s.data[:m]))
        gw_re = np.zeros(w_re.shape)
        gw_im = np.zeros(w_im.shape)
        gw_re[:, :, :m] = np.real(gw)
        gw_im[:, :, :m] = np.imag(gw)
        return gs, gw_re, gw_im

    return _make(out, (s, w_re, w_im), vjp, "channel_mix")


def spectrum_energy(s: np.ndarray, n: int) -> float:
    """Signal energy carried by a half spectrum: (1/n) sum_k c_k |s_k|^2."""
    c = _mode_weights(n).reshape((-1,) + (1,) * (s.ndim - 1))
    return float(np.sum(c * np.abs(s) ** 2) / n)


# ---------------------------------------------------------------------------
# mode-limited transforms
#
# A Fourier layer discards everything above its M retained modes, so the
# full transform is wasted work on long sample axes.  These compute exactly
# rfft-then-truncate (and its inverse) restricted to the first K rows, as
# K x n matrix products; K is small, so this is far cheaper than the FFT.
# ---------------------------------------------------------------------------

_mode_matrix_cache: dict[tuple[int, int], tuple[np.ndarray, np.ndarray]] = {}


def _mode_matrices(n: int, k: int) -> tuple[np.ndarray, np.ndarray]:
    """(forward, inverse) matrices for the first k non-negative modes."""
    cached = _mode_matrix_cache.get((n, k))
    if cached is None:
        j = np.arange(n)
        freqs = np.arange(k)
        fwd = np.exp(-2j * np.pi * np.outer(freqs, j) / n)  # (k, n)
        weights = _mode_weights(n)[:k]
        inv = (np.conj(fwd).T * weights) / n                # (n, k)
        cached = (fwd, inv)
        _mode_matrix_cache[(n, k)] = cached
    return cached


def rfft_modes(v, modes: int) -> Tensor:
    """First min(modes, floor(n/2)+1) rows of rfft(v); rows beyond are dropped."""
    v = as_tensor(v)
    n = v.shape[0]
    if n < 2:
        raise ContractError(f"rfft requires length >= 2, got {n}")
    if modes < 1:
        raise ContractError(f"mode count must be >= 1, got {modes}")
    k = min(modes, half_len(n))
    fwd, _ = _mode_matrices(n, k)
    out = fwd @ v.data.astype(np.complex128)

    def vjp(g):
        return (np.real(np.conj(fwd).T @ g),)

    return _make(out, (v,), vjp, "rfft_modes")


def irfft_modes(s, n: int) -> Tensor:
    """Real inverse of a truncated half spectrum (k rows of modes, k <= floor(n/2)+1)."""
    s = as_tensor(s)
    k = s.shape[0]
    if k > half_len(n) or k < 1:
        raise ContractError(f"{k} modes inconsistent with signal length {n}")
    fwd, inv = _mode_matrices(n, k)
    out = np.real(inv @ s.data)

    def vjp(g):
        weights = _mode_weights(n)[:k].reshape((k,) + (1,) * (g.ndim - 1))
        return ((fwd @ g) * (weights / n),)

    return _make(out, (s,), vjp, "irfft_modes")
