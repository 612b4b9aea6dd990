"""Shoebox image-source room impulse responses and reverberation-time estimation."""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Optional

import numpy as np

from auxsrp.core import DEFAULT_CONSTANTS, AcousticConstants, GeometryError, as_position

FD_TAPS = 81
_HALF = FD_TAPS // 2


class RoomError(ValueError):
    pass


@dataclass(frozen=True)
class RoomSpec:
    dimensions: tuple = (6.0, 6.0, 2.4)
    reflection_coefficient: float = 0.0
    max_image_order: Optional[int] = None
    max_length_s: float = 1.0

    def __post_init__(self):
        dims = tuple(float(d) for d in self.dimensions)
        if len(dims) != 3 or any(not (d > 0) for d in dims):
            raise RoomError(f"room dimensions must be three positive lengths, got {self.dimensions}")
        object.__setattr__(self, "dimensions", dims)
        if not (0.0 <= self.reflection_coefficient < 1.0):
            raise RoomError("reflection coefficient must lie in [0, 1)")

    @property
    def volume(self) -> float:
        lx, ly, lz = self.dimensions
        return lx * ly * lz

    @property
    def surface(self) -> float:
        lx, ly, lz = self.dimensions
        return 2.0 * (lx * ly + lx * lz + ly * lz)

    def with_beta(self, beta: float) -> "RoomSpec":
        return replace(self, reflection_coefficient=float(beta))

    def sabine_t60(self, c: AcousticConstants = DEFAULT_CONSTANTS) -> float:
        """Sabine T60 for energy absorption ``1 - beta^2`` on every wall."""
        alpha = 1.0 - self.reflection_coefficient ** 2
        return 24.0 * math.log(10.0) * self.volume / (c.speed_of_sound * self.surface * alpha)

    def eyring_t60(self, c: AcousticConstants = DEFAULT_CONSTANTS) -> float:
        beta = self.reflection_coefficient
        if beta <= 0.0:
            return 0.0
        return 24.0 * math.log(10.0) * self.volume / (
            c.speed_of_sound * self.surface * (-2.0 * math.log(beta)))

    def contains(self, p, margin: float = 0.0) -> bool:
        p = as_position(p)
        return bool(np.all(p > margin) and np.all(p < np.asarray(self.dimensions) - margin))


@dataclass
class Rir:
    samples: np.ndarray
    sample_rate: float
    direct_index: int
    distance: float

    def __len__(self):
        return len(self.samples)


def rir_length(room: RoomSpec, distance: float, fs: float,
               c: AcousticConstants = DEFAULT_CONSTANTS) -> int:
    """Samples needed to hold 1.5 x the Sabine T60 (capped at ``max_length_s``).

    In a shoebox with uniform walls the image-source decay is slower than
    Eyring predicts, so the (longer) Sabine figure sets the truncation.
    """
    t = 0.0 if room.reflection_coefficient == 0.0 else 1.5 * room.sabine_t60(c)
    t = min(t, room.max_length_s)
    direct = distance / c.speed_of_sound
    return int(math.ceil(max(t, direct) * fs)) + FD_TAPS + 1


def _axis_images(src: float, length: float, reach: float):
    """Image coordinates and wall-hit counts along one axis, within +-reach of the room."""
    n_max = int(math.ceil(reach / (2.0 * length))) + 1
    n = np.arange(-n_max, n_max + 1)
    pos = np.concatenate([src + 2.0 * n * length, -src + 2.0 * n * length])
    hits = np.concatenate([2 * np.abs(n), np.abs(n - 1) + np.abs(n)])
    return pos, hits


def image_sources(room: RoomSpec, source, mic, max_distance: float):
    """Image positions' distances to ``mic`` and their reflection counts.

    Only images closer than ``max_distance`` (and within ``max_image_order``
    reflections, when set) are returned, sorted by (distance, reflections).
    """
    src, m = as_position(source), as_position(mic)
    axes = [_axis_images(src[a], room.dimensions[a], max_distance) for a in range(3)]
    (px, hx), (py, hy), (pz, hz) = axes
    dx2 = (px - m[0]) ** 2
    dy2 = (py - m[1]) ** 2
    dz2 = (pz - m[2]) ** 2
    d2 = dx2[:, None, None] + dy2[None, :, None] + dz2[None, None, :]
    refl = hx[:, None, None] + hy[None, :, None] + hz[None, None, :]
    keep = d2 <= max_distance ** 2
    if room.max_image_order is not None:
        keep &= refl <= room.max_image_order
    d = np.sqrt(d2[keep])
    r = refl[keep]
    order = np.lexsort((r, d))
    return d[order], r[order]


def _fractional_delay_taps(delays: np.ndarray):
    """Integer tap indices (n, 81) and Hann-windowed sinc weights for given delays (samples)."""
    base = np.round(delays).astype(np.int64)
    idx = base[:, None] + np.arange(-_HALF, _HALF + 1)[None, :]
    x = idx - delays[:, None]
    w = 0.5 * (1.0 + np.cos(np.pi * x / (_HALF + 1)))
    return idx, np.sinc(x) * w


def _accumulate(length: int, delays: np.ndarray, amps: np.ndarray, chunk: int = 20000):
    out = np.zeros(length)
    for s in range(0, len(delays), chunk):
        idx, taps = _fractional_delay_taps(delays[s:s + chunk])
        vals = taps * amps[s:s + chunk, None]
        ok = (idx >= 0) & (idx < length)
        out += np.bincount(idx[ok], weights=vals[ok], minlength=length)
    return out


def _check_inside(room: RoomSpec, p, what: str):
    if not room.contains(p):
        raise RoomError(f"{what} {as_position(p).tolist()} is not strictly inside the room "
                        f"{list(room.dimensions)}")


def ism_rir(room: RoomSpec, source, mic, fs: float = 16000.0,
            c: AcousticConstants = DEFAULT_CONSTANTS, length: Optional[int] = None) -> Rir:
    """Image-source RIR with 81-tap windowed-sinc fractional delays.

    Every image contributes ``beta**reflections / (4 pi d)`` at delay ``d / c``.
    """
    _check_inside(room, source, "source")
    _check_inside(room, mic, "microphone")
    src, m = as_position(source), as_position(mic)
    dist = float(np.linalg.norm(src - m))
    if dist <= 0:
        raise GeometryError("source and microphone coincide")
    if length is None:
        length = rir_length(room, dist, fs, c)
    beta = room.reflection_coefficient
    reach = (length - _HALF) / fs * c.speed_of_sound
    if beta == 0.0:
        d, r = np.array([dist]), np.array([0])
    else:
        d, r = image_sources(room, src, m, reach)
    amps = beta ** r.astype(float) / (c.xi * d)
    h = _accumulate(length, d * fs / c.speed_of_sound, amps)
    return Rir(h, fs, int(round(dist * fs / c.speed_of_sound)), dist)


class RirBasis:
    """RIR split by reflection count: ``h(beta) = sum_r beta**r * rows[r]``.

    Image positions and fractional-delay taps do not depend on the reflection
    coefficient, so one basis serves every beta (used by the calibration
    search).
    """

    def __init__(self, room: RoomSpec, source, mic, fs: float, length: int,
                 c: AcousticConstants = DEFAULT_CONSTANTS):
        _check_inside(room, source, "source")
        _check_inside(room, mic, "microphone")
        src, m = as_position(source), as_position(mic)
        self.distance = float(np.linalg.norm(src - m))
        if self.distance <= 0:
            raise GeometryError("source and microphone coincide")
        self.fs = fs
        self.length = length
        reach = (length - _HALF) / fs * c.speed_of_sound
        d, r = image_sources(room, src, m, reach)
        self.rows = np.zeros((int(r.max()) + 1, length))
        amps = 1.0 / (c.xi * d)
        for order in np.unique(r):
            sel = r == order
            self.rows[order] = _accumulate(length, d[sel] * fs / c.speed_of_sound, amps[sel])
        self.direct_index = int(round(self.distance * fs / c.speed_of_sound))

    def rir(self, beta: float, length: Optional[int] = None) -> Rir:
        powers = beta ** np.arange(self.rows.shape[0], dtype=float)
        powers[0] = 1.0
        n = self.length if length is None else min(length, self.length)
        return Rir(powers @ self.rows[:, :n], self.fs, self.direct_index, self.distance)


def split_rir(rir: Rir, direct_window_ms: float = 1.0) -> tuple[np.ndarray, np.ndarray]:
    """Split into direct (+-window around the direct arrival) and reverberant parts.

    The two parts sum exactly to ``rir.samples``; windows past either end are clamped.
    """
    h = rir.samples
    if not (0 <= rir.direct_index < len(h)):
        raise RoomError(f"direct index {rir.direct_index} outside RIR of length {len(h)}")
    w = int(round(direct_window_ms * rir.sample_rate / 1000.0))
    lo = max(rir.direct_index - w, 0)
    hi = min(rir.direct_index + w + 1, len(h))
    direct = np.zeros_like(h)
    direct[lo:hi] = h[lo:hi]
    return direct, h - direct


def rir_drr_db(rir: Rir, direct_window_ms: float = 1.0) -> float:
    hd, hr = split_rir(rir, direct_window_ms)
    er = float(np.sum(hr ** 2))
    if er == 0.0:
        return math.inf
    return 10.0 * math.log10(float(np.sum(hd ** 2)) / er)


def schroeder_curve(h: np.ndarray) -> np.ndarray:
    """Energy decay curve in dB (0 dB at t = 0) by backward integration."""
    e = np.cumsum((np.asarray(h, dtype=float) ** 2)[::-1])[::-1]
    with np.errstate(divide="ignore"):
        return 10.0 * np.log10(e / e[0])


def t60_schroeder(h: np.ndarray, fs: float, fit_db: tuple = (-5.0, -35.0)) -> float:
    """T60 from a straight-line fit of the decay curve between ``fit_db`` levels."""
    edc = schroeder_curve(h)
    hi, lo = fit_db
    idx = np.nonzero((edc <= hi) & (edc >= lo))[0]
    if len(idx) < 2:
        return float("nan")
    t = idx / fs
    slope, _ = np.polyfit(t, edc[idx], 1)
    if slope >= 0:
        return float("nan")
    return float(-60.0 / slope)
