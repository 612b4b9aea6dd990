"""STFT analysis, recursively smoothed cross-power spectra and PHAT weighting."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy.signal import get_window, lfilter


class SpectralConfigError(ValueError):
    pass


@dataclass(frozen=True)
class StftConfig:
    sample_rate: float = 16000.0
    frame_length: int = 512
    hop: int = 256
    window: str = "sqrt-hann"

    def __post_init__(self):
        if self.sample_rate <= 0:
            raise SpectralConfigError("sample_rate must be positive")
        if self.frame_length <= 0 or self.frame_length % 2:
            raise SpectralConfigError("frame_length must be a positive even number")
        if not (0 < self.hop <= self.frame_length):
            raise SpectralConfigError("hop must lie in (0, frame_length]")

    @property
    def num_bins(self) -> int:
        return self.frame_length // 2 + 1

    def window_samples(self) -> np.ndarray:
        """Periodic analysis window. ``sqrt-hann`` is the square root of a periodic Hann."""
        if self.window == "sqrt-hann":
            return np.sqrt(get_window("hann", self.frame_length, fftbins=True))
        if self.window in ("rect", "boxcar", "rectangular"):
            return np.ones(self.frame_length)
        return get_window(self.window, self.frame_length, fftbins=True)

    def bin_frequencies(self) -> np.ndarray:
        """Angular frequency of every one-sided bin, rad/s."""
        k = np.arange(self.num_bins)
        return 2.0 * math.pi * self.sample_rate * k / self.frame_length


@dataclass
class Spectrogram:
    """One-sided STFT. ``data`` has shape (channels, frames, bins)."""

    data: np.ndarray
    config: StftConfig

    @property
    def num_channels(self) -> int:
        return self.data.shape[0]

    @property
    def num_frames(self) -> int:
        return self.data.shape[1]

    @property
    def num_bins(self) -> int:
        return self.data.shape[2]

    @property
    def bin_frequencies(self) -> np.ndarray:
        return self.config.bin_frequencies()


@dataclass
class CrossSpectrumSet:
    """Cross-power spectra for a list of channel pairs.

    ``values`` is (pairs, frames, bins) or, once averaged over time, (pairs, bins).
    Row ``p`` holds the spectrum of channel ``pairs[p][0]`` times the conjugate
    of channel ``pairs[p][1]``.
    """

    pairs: list[tuple[int, int]]
    values: np.ndarray
    smoothing: float = 0.0
    phat: bool = False
    bin_frequencies: Optional[np.ndarray] = field(default=None, repr=False)

    @property
    def per_frame(self) -> bool:
        return self.values.ndim == 3

    def index(self, pair: tuple[int, int]) -> int:
        return self.pairs.index(tuple(pair))

    def get(self, i: int, j: int) -> np.ndarray:
        """Spectrum for (i, j); falls back to the conjugate of a stored (j, i)."""
        key = (i, j)
        if key in self.pairs:
            return self.values[self.pairs.index(key)]
        rev = (j, i)
        if rev in self.pairs:
            return np.conj(self.values[self.pairs.index(rev)])
        raise KeyError(f"pair {key} not present")


def frame_signal(x: np.ndarray, frame_length: int, hop: int) -> np.ndarray:
    """Frames of a (channels, samples) array, shape (channels, frames, frame_length)."""
    n = x.shape[-1]
    num_frames = (n - frame_length) // hop + 1
    idx = hop * np.arange(num_frames)[:, None] + np.arange(frame_length)[None, :]
    return x[..., idx]


def stft(signal: np.ndarray, cfg: StftConfig = StftConfig()) -> Spectrogram:
    """Analysis STFT of a mono (samples,) or multichannel (channels, samples) signal.

    No padding: only full frames are kept.
    """
    x = np.asarray(signal, dtype=float)
    if x.ndim == 1:
        x = x[None, :]
    if x.ndim != 2 or x.shape[0] < 1:
        raise SpectralConfigError("signal must be (samples,) or (channels, samples)")
    if x.shape[1] < cfg.frame_length:
        raise SpectralConfigError(
            f"signal has {x.shape[1]} samples, shorter than one frame ({cfg.frame_length})")
    frames = frame_signal(x, cfg.frame_length, cfg.hop) * cfg.window_samples()
    return Spectrogram(np.fft.rfft(frames, axis=-1), cfg)


def recursive_cross_psd(spec: Spectrogram, pairs: Sequence[tuple[int, int]],
                        smoothing: float = 0.98) -> CrossSpectrumSet:
    """First-order recursive average of ``Y_i Y_j^*`` along frames.

    The recursion is started from the first instantaneous product, so a
    stationary input has no start-up bias.
    """
    if not (0.0 <= smoothing < 1.0):
        raise SpectralConfigError(f"smoothing factor must be in [0, 1), got {smoothing}")
    pairs = [tuple(map(int, p)) for p in pairs]
    for i, j in pairs:
        if not (0 <= i < spec.num_channels and 0 <= j < spec.num_channels):
            raise SpectralConfigError(f"pair {(i, j)} out of range for {spec.num_channels} channels")
    if not pairs:
        raise SpectralConfigError("no channel pairs given")
    Y = spec.data
    ii = [p[0] for p in pairs]
    jj = [p[1] for p in pairs]
    inst = Y[ii] * np.conj(Y[jj])
    if smoothing == 0.0:
        values = inst
    else:
        zi = smoothing * inst[:, :1, :]
        values, _ = lfilter([1.0 - smoothing], [1.0, -smoothing], inst, axis=1, zi=zi)
    # auto-spectra are real by definition; drop rounding residue
    for p, (i, j) in enumerate(pairs):
        if i == j:
            values[p] = values[p].real
    return CrossSpectrumSet(pairs, values, smoothing=smoothing,
                            bin_frequencies=spec.bin_frequencies)


def phat_weight(cs: CrossSpectrumSet, floor_eps: float = 1e-12) -> CrossSpectrumSet:
    """Normalise every value to unit modulus; near-silent bins become exactly zero.

    A bin is treated as silent when its modulus is at most ``floor_eps`` times
    the largest modulus over bins of the same pair (and frame).
    """
    if floor_eps < 0:
        raise SpectralConfigError("floor_eps must be non-negative")
    v = cs.values
    mag = np.abs(v)
    threshold = floor_eps * mag.max(axis=-1, keepdims=True)
    keep = mag > threshold
    out = np.zeros_like(v, dtype=complex)
    np.divide(v, mag, out=out, where=keep)
    return CrossSpectrumSet(list(cs.pairs), out, smoothing=cs.smoothing, phat=True,
                            bin_frequencies=cs.bin_frequencies)


def time_average(cs: CrossSpectrumSet) -> CrossSpectrumSet:
    """Mean over frames. The result is not re-normalised."""
    if not cs.per_frame:
        return cs
    return CrossSpectrumSet(list(cs.pairs), cs.values.mean(axis=1), smoothing=cs.smoothing,
                            phat=cs.phat, bin_frequencies=cs.bin_frequencies)


def effective_time_constant(smoothing: float, hop_seconds: float) -> float:
    """Time (s) after which a recursive average's impulse response drops to 1/e."""
    return -hop_seconds / math.log(smoothing)
