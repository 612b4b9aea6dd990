"""Spherically isotropic (diffuse) noise from a sum of plane waves."""

from __future__ import annotations

import math
from typing import Callable, Optional

import numpy as np

from auxsrp.core import DEFAULT_CONSTANTS, AcousticConstants
from auxsrp.sim.rng import make_rng

_CHUNK_ELEMS = 1 << 21


def fibonacci_sphere(n: int) -> np.ndarray:
    """``n`` nearly uniform unit vectors on the sphere, shape (n, 3)."""
    i = np.arange(n) + 0.5
    z = 1.0 - 2.0 * i / n
    r = np.sqrt(1.0 - z * z)
    phi = math.pi * (3.0 - math.sqrt(5.0)) * i
    return np.stack([r * np.cos(phi), r * np.sin(phi), z], axis=1)


def isotropic_noise(duration: float, fs: float, mic_positions, num_plane_waves: int = 512,
                    seed: int = 0, c: AcousticConstants = DEFAULT_CONSTANTS,
                    spectral_gain: Optional[Callable[[np.ndarray], np.ndarray]] = None) -> np.ndarray:
    """Diffuse noise at every microphone, shape (mics, samples).

    Independent white plane waves arrive from ``num_plane_waves`` directions
    spread uniformly over the sphere. Delays are applied exactly as phase
    shifts on one long DFT (circular in time). Each channel has unit variance
    in expectation when ``spectral_gain`` is None. ``spectral_gain`` maps
    frequencies (Hz) to an amplitude gain applied identically on every channel,
    which colours the noise without changing its spatial coherence.
    """
    if num_plane_waves < 64:
        raise ValueError("num_plane_waves must be at least 64")
    mics = np.atleast_2d(np.asarray(mic_positions, dtype=float))
    if mics.shape[1] == 2:
        mics = np.hstack([mics, np.zeros((len(mics), 1))])
    n = int(round(duration * fs))
    if n < 2:
        raise ValueError("duration too short")
    rng = make_rng(seed)
    dirs = fibonacci_sphere(num_plane_waves)
    # a wave travelling along -u arrives at m with delay -u.m/c relative to the origin
    tau = -(mics - mics.mean(axis=0)) @ dirs.T / c.speed_of_sound  # (M, P)
    num_bins = n // 2 + 1
    dw = 2.0 * math.pi * fs / n
    # unit variance per channel: sum over P waves and the irfft 1/n scaling
    scale = math.sqrt(n / (2.0 * num_plane_waves))
    spec = np.zeros((len(mics), num_bins), dtype=complex)
    step = np.exp(-1j * dw * tau)  # phase advance per bin, (M, P)
    chunk = max(16, _CHUNK_ELEMS // tau.size)
    for k0 in range(0, num_bins, chunk):
        k1 = min(k0 + chunk, num_bins)
        # the normal stream is consumed in (bin, wave) order, so chunking does not change it
        w = rng.standard_normal((k1 - k0, num_plane_waves, 2))
        waves = (w[..., 0] + 1j * w[..., 1]) * scale  # (K, P)
        phase = np.broadcast_to(step, (k1 - k0,) + step.shape).copy()
        phase[0] = np.exp(-1j * k0 * dw * tau)
        np.cumprod(phase, axis=0, out=phase)  # phase[k] = exp(-j w_k tau)
        spec[:, k0:k1] = np.matmul(phase, waves[:, :, None])[..., 0].T
    # DC and Nyquist of a real signal are real; the imaginary draws there are dropped
    spec[:, 0] = spec[:, 0].real * math.sqrt(2.0)
    if n % 2 == 0:
        spec[:, -1] = spec[:, -1].real * math.sqrt(2.0)
    if spectral_gain is not None:
        spec *= np.asarray(spectral_gain(np.arange(num_bins) * fs / n), dtype=float)[None, :]
    return np.fft.irfft(spec, n=n, axis=1)
