"""Speech-like test signals and WAV input for source material."""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.io import wavfile
from scipy.signal import butter, lfilter, resample_poly, sosfilt, welch

from auxsrp.sim.rng import make_rng

SYNTHETIC = "synthetic-speech"
WAV_FILE = "wav-file"

SEGMENT_S = 0.150
SYLLABLE_HZ = 4.0
SILENCE_FRACTION = 0.30
HIGHPASS_HZ = 100.0


@dataclass
class SourceSignal:
    samples: np.ndarray
    sample_rate: float
    kind: str = SYNTHETIC
    seed: int | None = None

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=float)
        if self.samples.ndim != 1:
            raise ValueError("source signal must be mono")
        if not np.any(self.samples):
            raise ValueError("source signal has zero energy")

    @property
    def duration(self) -> float:
        return len(self.samples) / self.sample_rate


def pink_noise(n: int, rng: np.random.Generator) -> np.ndarray:
    """1/f-power noise by spectral shaping of white noise."""
    spec = np.fft.rfft(rng.standard_normal(n))
    f = np.arange(len(spec), dtype=float)
    f[0] = 1.0
    spec /= np.sqrt(f)
    spec[0] = 0.0
    x = np.fft.irfft(spec, n=n)
    return x / np.std(x)


def _resonator(fc: float, bw: float, fs: float):
    """Two-pole resonator normalised to unit gain at ``fc``."""
    r = math.exp(-math.pi * bw / fs)
    theta = 2.0 * math.pi * fc / fs
    a = [1.0, -2.0 * r * math.cos(theta), r * r]
    z = np.exp(1j * theta)
    gain = abs(a[0] + a[1] / z + a[2] / z ** 2)
    return [gain], a


def _silence_mask(n: int, fs: float, rng: np.random.Generator) -> np.ndarray:
    """Gain track with ~30% of the samples in pauses, 20 ms raised-cosine ramps."""
    mask = np.ones(n)
    target = SILENCE_FRACTION * n
    silent = 0
    # pauses of 120-400 ms placed at random, never overlapping the first 100 ms
    guard = int(0.1 * fs)
    for _ in range(1000):
        if silent >= target:
            break
        length = int(rng.uniform(0.12, 0.40) * fs)
        start = int(rng.integers(guard, max(guard + 1, n - length)))
        seg = mask[start:start + length]
        silent += int(np.count_nonzero(seg))
        seg[:] = 0.0
    ramp = int(0.02 * fs)
    kernel = np.hanning(2 * ramp + 1)
    kernel /= kernel.sum()
    return np.convolve(mask, kernel, mode="same")


def synth_speech(duration: float = 3.0, fs: float = 16000.0, seed: int = 0) -> SourceSignal:
    """Speech-like signal: pink excitation through drifting formant resonators.

    Formant sets (3 to 5 resonances) are redrawn every 150 ms and crossfaded,
    a 4 Hz syllabic envelope is applied, and about 30% of the signal is
    replaced by pauses. Content below 100 Hz is removed, as in real speech.
    Peak-normalised to 0.9.
    """
    if duration <= 0:
        raise ValueError("duration must be positive")
    rng = make_rng(seed, 0x5EEC)
    n = int(round(duration * fs))
    excitation = pink_noise(n, rng)

    seg = int(round(SEGMENT_S * fs))
    win = np.hanning(2 * seg + 1)[:-1]
    out = np.zeros(n + 2 * seg)
    padded = np.concatenate([excitation, np.zeros(2 * seg)])
    formant_ranges = [(250, 900), (800, 2400), (2000, 3200), (3000, 4200), (4000, 5500)]
    for start in range(-seg, n, seg):
        lo = max(start, 0)
        chunk = padded[lo:start + 2 * seg]
        if len(chunk) == 0:
            continue
        count = int(rng.integers(3, 6))
        y = np.zeros(len(chunk))
        for f_idx in range(count):
            fmin, fmax = formant_ranges[f_idx]
            fc = rng.uniform(fmin, fmax)
            bw = rng.uniform(60.0, 160.0) * (1.0 + 0.5 * f_idx)
            b, a = _resonator(fc, bw, fs)
            y += lfilter(b, a, chunk) * 10.0 ** (-6.0 * f_idx / 20.0)
        w = win[lo - start:lo - start + len(y)]
        out[lo:lo + len(y)] += y * w
    x = out[:n]

    t = np.arange(n) / fs
    phase = rng.uniform(0.0, 2.0 * math.pi)
    envelope = 0.3 + 0.7 * 0.5 * (1.0 + np.sin(2.0 * math.pi * SYLLABLE_HZ * t + phase))
    x = x * envelope * _silence_mask(n, fs, rng)
    x = sosfilt(butter(4, HIGHPASS_HZ, "highpass", fs=fs, output="sos"), x)
    x = x / np.max(np.abs(x)) * 0.9
    return SourceSignal(x, fs, SYNTHETIC, seed)


def read_wav(path, fs: float | None = None) -> tuple[np.ndarray, float]:
    """Read PCM16/PCM32/float WAV as float (channels, samples), optionally resampled."""
    rate, data = wavfile.read(str(path))
    data = np.asarray(data)
    if data.dtype == np.int16:
        x = data.astype(float) / 32768.0
    elif data.dtype == np.int32:
        x = data.astype(float) / 2147483648.0
    elif data.dtype == np.uint8:
        x = (data.astype(float) - 128.0) / 128.0
    else:
        x = data.astype(float)
    x = x.T if x.ndim == 2 else x[None, :]
    if fs is not None and int(fs) != int(rate):
        g = math.gcd(int(fs), int(rate))
        x = resample_poly(x, int(fs) // g, int(rate) // g, axis=1)
        rate = fs
    return x, float(rate)


def write_wav(path, x: np.ndarray, fs: float, fmt: str = "float32") -> Path:
    """Write (channels, samples) or (samples,) as PCM16 or 32-bit float WAV."""
    path = Path(path)
    x = np.asarray(x, dtype=float)
    data = x.T if x.ndim == 2 else x
    if fmt == "pcm16":
        data = np.clip(np.round(data * 32768.0), -32768, 32767).astype(np.int16)
    elif fmt == "float32":
        data = data.astype(np.float32)
    else:
        raise ValueError(f"unknown WAV format {fmt!r}")
    wavfile.write(str(path), int(fs), data)
    return path


def load_source(path, fs: float = 16000.0) -> SourceSignal:
    x, rate = read_wav(path, fs)
    return SourceSignal(x.mean(axis=0), rate, WAV_FILE)


def long_term_spectrum(x: np.ndarray, fs: float, nperseg: int = 512):
    """Amplitude-gain function (Hz -> gain) following the long-term spectrum of ``x``.

    Normalised to unit mean power gain, so it can colour white noise into
    noise with the same average spectral shape (a babble stand-in).
    """
    f, p = welch(x, fs, nperseg=nperseg)
    amp = np.sqrt(p / p.mean())

    def gain(freqs):
        return np.interp(freqs, f, amp)

    return gain
