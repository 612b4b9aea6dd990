"""Scene rendering: calibrated rooms, stem separation and level matching."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy.signal import fftconvolve

from auxsrp.core import DEFAULT_CONSTANTS, AcousticConstants, ArrayGeometry, DoaVector, as_position
from auxsrp.sim.ism import (Rir, RirBasis, RoomSpec, ism_rir, rir_drr_db, rir_length, split_rir,
                            t60_schroeder)
from auxsrp.sim.noise import isotropic_noise
from auxsrp.sim.speech import SourceSignal, long_term_spectrum

DIRECT_WINDOW_MS = 1.0
_BRACKET = (0.3, 0.5, 0.7, 0.8, 0.9, 0.95)


class CalibrationError(RuntimeError):
    """The requested DRR cannot be reached inside the allowed reflection range."""


@dataclass
class CalibrationReport:
    beta: float
    target_drr_db: float
    achieved_drr_db: float
    per_mic_drr_db: list
    sabine_t60: float
    schroeder_t60: float
    iterations: int


class _LazyBasis:
    """RirBasis for one source/mic pair, rebuilt longer only when needed."""

    def __init__(self, room, source, mic, fs, c):
        self.args = (room, source, mic, fs)
        self.c = c
        self.basis: Optional[RirBasis] = None

    def rir(self, beta: float, length: int) -> Rir:
        if self.basis is None or self.basis.length < length:
            room, source, mic, fs = self.args
            self.basis = RirBasis(room, source, mic, fs, int(length * 1.2), self.c)
        return self.basis.rir(beta, length)


def calibrate_reflection(room: RoomSpec, mic_positions, source, target_drr_db: float,
                         fs: float = 16000.0, c: AcousticConstants = DEFAULT_CONSTANTS,
                         direct_window_ms: float = DIRECT_WINDOW_MS, tol_db: float = 0.01,
                         beta_max: float = 0.99, max_iter: int = 60) -> tuple[RoomSpec, CalibrationReport]:
    """Bisect the wall reflection coefficient so the mean DRR over ``mic_positions`` hits the target.

    DRR is evaluated on RIRs truncated exactly as :func:`ism_rir` would
    render them for each candidate coefficient. Deterministic.
    """
    mics = [as_position(m) for m in np.atleast_2d(mic_positions)]
    src = as_position(source)
    bases = [_LazyBasis(room, src, m, fs, c) for m in mics]

    def evaluate(beta):
        r = room.with_beta(beta)
        vals = []
        for b, m in zip(bases, mics):
            n = rir_length(r, float(np.linalg.norm(src - m)), fs, c)
            vals.append(rir_drr_db(b.rir(beta, n), direct_window_ms))
        return float(np.mean(vals)), vals

    # bracket from below: long RIRs for large beta are only built when needed
    lo, hi, drr_hi = 0.0, None, None
    for cand in [b for b in _BRACKET if b < beta_max] + [beta_max]:
        drr_c, _ = evaluate(cand)
        if drr_c <= target_drr_db:
            hi, drr_hi = cand, drr_c
            break
        lo = cand
    if hi is None:
        raise CalibrationError(
            f"target DRR {target_drr_db:.2f} dB unreachable: beta in [0, {beta_max}] spans "
            f"DRR from +inf down to {drr_c:.2f} dB")
    beta, drr, per_mic = hi, drr_hi, []
    it = 0
    for it in range(1, max_iter + 1):
        beta = 0.5 * (lo + hi)
        drr, per_mic = evaluate(beta)
        if abs(drr - target_drr_db) <= tol_db:
            break
        if drr > target_drr_db:
            lo = beta
        else:
            hi = beta
    calibrated = room.with_beta(beta)
    ref = bases[0].rir(beta, rir_length(calibrated, float(np.linalg.norm(src - mics[0])), fs, c))
    report = CalibrationReport(beta, target_drr_db, drr, per_mic, calibrated.sabine_t60(c),
                               t60_schroeder(ref.samples, fs), it)
    return calibrated, report


@dataclass
class SceneConfig:
    """Geometry and level targets of one simulated scene.

    ``orientation_deg`` rotates the CMA about its centroid. ``drr_db = None``
    means an anechoic room; ``rsnr_db = None`` means no noise. With
    ``noise_spectrum = "speech"`` the diffuse noise takes the long-term
    spectrum of the source signal.
    """

    room_dimensions: tuple = (6.0, 6.0, 2.4)
    source: tuple = (2.0, 3.0, 1.75)
    centroid: tuple = (4.0, 3.0, 1.75)
    num_mics: int = 3
    spacing: float = 0.05
    orientation_deg: float = 0.0
    aux_positions: list = field(default_factory=list)
    fs: float = 16000.0
    drr_db: Optional[float] = -1.4
    rsnr_db: Optional[float] = -1.4
    direct_window_ms: float = DIRECT_WINDOW_MS
    num_plane_waves: int = 512
    noise_spectrum: str = "speech"
    speed_of_sound: float = 343.0

    @property
    def constants(self) -> AcousticConstants:
        return AcousticConstants(self.speed_of_sound)

    def geometry(self, orientation_deg: Optional[float] = None) -> ArrayGeometry:
        o = math.radians(self.orientation_deg if orientation_deg is None else orientation_deg)
        if self.num_mics == 3:
            return ArrayGeometry.triangle(self.centroid, self.spacing, o)
        if self.num_mics == 2:
            return ArrayGeometry.pair(self.centroid, self.spacing, o)
        raise ValueError("only 2- and 3-microphone arrays are built in")

    def true_doa(self) -> DoaVector:
        return DoaVector.from_vector(as_position(self.source) - as_position(self.centroid))


@dataclass
class ScenarioRender:
    """Per-channel stems; channels are the CMA mics followed by the aux mics."""

    direct: np.ndarray
    reverb: np.ndarray
    noise: np.ndarray
    fs: float
    num_cma: int
    positions: np.ndarray
    source_position: np.ndarray
    doa: DoaVector
    dc: float
    beta: float
    drr_db: float
    rir_drr_db: float
    rsnr_db: float
    sur_db: float

    @property
    def mixed(self) -> np.ndarray:
        return self.direct + self.reverb + self.noise

    @property
    def aux_channels(self) -> list[int]:
        return list(range(self.num_cma, self.positions.shape[0]))


def _energy(x: np.ndarray) -> np.ndarray:
    return np.sum(x * x, axis=-1)


def noise_gain(e_reverb: float, e_noise: float, rsnr_db: float) -> float:
    """Amplitude gain on the noise that makes ``e_reverb / (g^2 e_noise)`` equal the target."""
    return math.sqrt(e_reverb / (e_noise * 10.0 ** (rsnr_db / 10.0)))


class RirCache(dict):
    """RIRs keyed by (room, source, mic, fs); shared across scenarios of a campaign."""

    def get_rir(self, room: RoomSpec, source, mic, fs: float, c: AcousticConstants) -> Rir:
        key = (room, tuple(np.round(as_position(source), 12)), tuple(np.round(as_position(mic), 12)),
               float(fs), c.speed_of_sound)
        rir = self.get(key)
        if rir is None:
            rir = ism_rir(room, source, mic, fs, c)
            self[key] = rir
        return rir


def render_scenario(cfg: SceneConfig, source: SourceSignal, room: RoomSpec, seed: int,
                    rir_cache: Optional[RirCache] = None) -> ScenarioRender:
    """Render direct, reverberant and noise stems at every CMA and aux microphone.

    The noise gain is set from CMA-averaged energies so the reverberant-to-noise
    ratio equals ``cfg.rsnr_db``; aux channels receive the same gain.
    """
    if not np.any(source.samples):
        raise ValueError("source signal is silent")
    c = cfg.constants
    cache = rir_cache if rir_cache is not None else RirCache()
    geom = cfg.geometry()
    positions = np.vstack([geom.mic_positions] + [as_position(a)[None, :] for a in cfg.aux_positions])
    s = source.samples
    n = len(s)
    direct = np.zeros((len(positions), n))
    reverb = np.zeros((len(positions), n))
    rir_drr = []
    for ch, pos in enumerate(positions):
        rir = cache.get_rir(room, cfg.source, pos, cfg.fs, c)
        if room.reflection_coefficient == 0.0:
            # no images: the whole response, sinc tails included, is direct path
            h_d, h_r = rir.samples, np.zeros_like(rir.samples)
        else:
            h_d, h_r = split_rir(rir, cfg.direct_window_ms)
        direct[ch] = fftconvolve(s, h_d)[:n]
        reverb[ch] = fftconvolve(s, h_r)[:n]
        if ch < geom.num_mics:
            rir_drr.append(rir_drr_db(rir, cfg.direct_window_ms))
    m = geom.num_mics
    e_d = _energy(direct[:m])
    e_r = _energy(reverb[:m])
    if cfg.rsnr_db is None:
        noise = np.zeros_like(direct)
    else:
        if not np.any(e_r > 0):
            raise ValueError("a noise level relative to reverberation needs a reverberant room")
        if cfg.noise_spectrum == "speech":
            shape = long_term_spectrum(s, cfg.fs)
        elif cfg.noise_spectrum == "white":
            shape = None
        else:
            raise ValueError(f"unknown noise spectrum {cfg.noise_spectrum!r}")
        raw = isotropic_noise(n / cfg.fs, cfg.fs, positions, cfg.num_plane_waves, seed, c, shape)
        noise = raw * noise_gain(float(e_r.mean()), float(_energy(raw[:m]).mean()), cfg.rsnr_db)
    e_n = _energy(noise[:m])
    with np.errstate(divide="ignore"):
        drr = float(np.mean(10.0 * np.log10(e_d / e_r))) if np.all(e_r > 0) else math.inf
        rsnr = float(10.0 * np.log10(e_r.mean() / e_n.mean())) if e_n.mean() > 0 else math.inf
        e_u = float((e_r + e_n).mean())
        sur = 10.0 * math.log10(float(np.sum(s * s)) / e_u) if e_u > 0 else math.inf
    src = as_position(cfg.source)
    return ScenarioRender(direct, reverb, noise, cfg.fs, m, positions, src, cfg.true_doa(),
                          float(np.linalg.norm(src - geom.centroid)), room.reflection_coefficient,
                          drr, float(np.mean(rir_drr)), rsnr, sur)
