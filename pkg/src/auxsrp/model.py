"""Analytic distortion model for diffuse (spherically isotropic) noise and reverberation.

Compares the distortion of the conventional PHAT spectrum between two closely
spaced microphones against the distortion of the spectrum rebuilt through an
auxiliary microphone, and sweeps the auxiliary position over a 2D grid.

Scene convention: the CMA centroid is the origin, the source sits at
``(-dc, 0, 0)``; the ray pointing directly away from the source is +x.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from auxsrp.core import DEFAULT_CONSTANTS, AcousticConstants, GeometryError, as_position

FAR_FIELD = "far-field"
EXACT = "exact"


def isotropic_coherence(omega, d, c: AcousticConstants = DEFAULT_CONSTANTS):
    """Spatial coherence ``sin(x)/x`` with ``x = omega d / c`` of a diffuse field."""
    if np.any(np.asarray(d) < 0):
        raise ValueError("distance must be non-negative")
    x = np.asarray(omega, dtype=float) * np.asarray(d, dtype=float) / c.speed_of_sound
    # np.sinc is normalised: sinc(t) = sin(pi t) / (pi t)
    return np.sinc(x / math.pi)


@dataclass(frozen=True)
class DistortionConfig:
    sur_db: float = 10.0
    d12: float = 0.05
    dc: float = 2.0
    omega0: float = 2.0 * math.pi * 8000.0
    num_freqs: int = 1025
    orientations_deg: tuple = tuple(range(0, 180, 10))
    tdoa_mode: str = FAR_FIELD
    constants: AcousticConstants = field(default_factory=AcousticConstants)

    def __post_init__(self):
        if not math.isfinite(self.sur_db):
            raise ValueError("sur_db must be finite")
        if self.d12 <= 0 or self.dc <= 0:
            raise ValueError("d12 and dc must be positive")
        if self.num_freqs < 2:
            raise ValueError("num_freqs must be at least 2")
        if self.omega0 <= 0:
            raise ValueError("omega0 must be positive")
        if self.tdoa_mode not in (FAR_FIELD, EXACT):
            raise ValueError(f"tdoa_mode must be {FAR_FIELD!r} or {EXACT!r}")
        if len(self.orientations_deg) < 1:
            raise ValueError("at least one orientation is required")
        object.__setattr__(self, "orientations_deg", tuple(float(o) for o in self.orientations_deg))

    @property
    def sur(self) -> float:
        return 10.0 ** (self.sur_db / 10.0)

    def omegas(self) -> np.ndarray:
        """Uniform frequency samples on [0, omega0], endpoints included."""
        return np.linspace(0.0, self.omega0, self.num_freqs)

    @property
    def source(self) -> np.ndarray:
        return np.array([-self.dc, 0.0, 0.0])

    @property
    def centroid(self) -> np.ndarray:
        return np.zeros(3)

    def mic_pair(self, orientation_deg: float) -> tuple[np.ndarray, np.ndarray]:
        """Positions of mics i and j for a pair rotated about the centroid."""
        a = math.radians(orientation_deg)
        u = np.array([math.cos(a), math.sin(a), 0.0]) * self.d12 / 2.0
        return self.centroid + u, self.centroid - u

    def to_dict(self) -> dict:
        d = asdict(self)
        d["constants"] = {"speed_of_sound": self.constants.speed_of_sound,
                          "point_source_attenuation": self.constants.xi}
        d["orientations_deg"] = list(self.orientations_deg)
        return d


@dataclass(frozen=True)
class AuxLinkGeometry:
    """Distances (m) and TDOAs (s) that enter the auxiliary distortion."""

    d_a: float
    d_ai: float
    d_aj: float
    tau_ia: float
    tau_aj: float


def aux_link_geometry(aux, mic_i, mic_j, cfg: DistortionConfig,
                      allow_coincident: bool = False) -> AuxLinkGeometry:
    aux, mic_i, mic_j = as_position(aux), as_position(mic_i), as_position(mic_j)
    nu = cfg.constants.speed_of_sound
    src = cfg.source
    d_a = float(np.linalg.norm(src - aux))
    d_ai = float(np.linalg.norm(aux - mic_i))
    d_aj = float(np.linalg.norm(aux - mic_j))
    if d_a <= 0:
        raise GeometryError("auxiliary microphone coincides with the source")
    if not allow_coincident and min(d_ai, d_aj) <= 0:
        raise GeometryError("auxiliary microphone coincides with a CMA microphone")
    if cfg.tdoa_mode == FAR_FIELD:
        v = (src - cfg.centroid) / np.linalg.norm(src - cfg.centroid)
        tau_ia = float(-(v @ (mic_i - aux)) / nu)
        tau_aj = float(-(v @ (aux - mic_j)) / nu)
    else:
        d_i = float(np.linalg.norm(src - mic_i))
        d_j = float(np.linalg.norm(src - mic_j))
        tau_ia = (d_i - d_a) / nu
        tau_aj = (d_a - d_j) / nu
    return AuxLinkGeometry(d_a, d_ai, d_aj, tau_ia, tau_aj)


def distortion_conventional(omega, cfg: DistortionConfig, d_ij: Optional[float] = None):
    """``(xi dc)^2 / SUR * sinc(omega d_ij / c)``. Real-valued."""
    d_ij = cfg.d12 if d_ij is None else d_ij
    xi = cfg.constants.xi
    return (xi * cfg.dc) ** 2 / cfg.sur * isotropic_coherence(omega, d_ij, cfg.constants)


def link_gain(aux: AuxLinkGeometry, cfg: DistortionConfig) -> float:
    """Scale ``xi^2 dc dA / SUR`` of the diffuse term on a CMA-to-aux link."""
    return cfg.constants.xi ** 2 * cfg.dc * aux.d_a / cfg.sur


def distortion_auxiliary(omega, aux: AuxLinkGeometry, cfg: DistortionConfig):
    """Distortion of the aux-rebuilt spectrum: two cross terms plus a product term."""
    omega = np.asarray(omega, dtype=float)
    g = link_gain(aux, cfg)
    s_ai = isotropic_coherence(omega, aux.d_ai, cfg.constants)
    s_aj = isotropic_coherence(omega, aux.d_aj, cfg.constants)
    cross = s_ai * np.exp(-1j * omega * aux.tau_aj) + s_aj * np.exp(-1j * omega * aux.tau_ia)
    return g * cross + g * g * s_ai * s_aj


def link_factors(omega, aux: AuxLinkGeometry, cfg: DistortionConfig):
    """Unnormalised per-link terms ``(exp(-j w tau_iA) + a, exp(-j w tau_Aj) + b)``."""
    omega = np.asarray(omega, dtype=float)
    g = link_gain(aux, cfg)
    a = g * isotropic_coherence(omega, aux.d_ai, cfg.constants)
    b = g * isotropic_coherence(omega, aux.d_aj, cfg.constants)
    return np.exp(-1j * omega * aux.tau_ia) + a, np.exp(-1j * omega * aux.tau_aj) + b


def heaviside(x):
    """Step with H(0) = 0."""
    return (np.asarray(x) > 0).astype(float)


def proportion_p(aux_position, orientation_deg: float, cfg: DistortionConfig,
                 allow_coincident: bool = False) -> float:
    """Fraction of frequency samples on [0, omega0] where |D_ij| > |D_ij^A|."""
    mi, mj = cfg.mic_pair(orientation_deg)
    geom = aux_link_geometry(aux_position, mi, mj, cfg, allow_coincident)
    w = cfg.omegas()
    d = np.abs(distortion_conventional(w, cfg))
    da = np.abs(distortion_auxiliary(w, geom, cfg))
    return float(heaviside(d - da).mean())


def p_avg(aux_position, cfg: DistortionConfig, allow_coincident: bool = False) -> float:
    """Mean of :func:`proportion_p` over the configured pair orientations."""
    return float(np.mean([proportion_p(aux_position, o, cfg, allow_coincident)
                          for o in cfg.orientations_deg]))


def _p_avg_many(points: np.ndarray, cfg: DistortionConfig) -> np.ndarray:
    """Vectorised P_avg for an (n, 3) array of aux positions (coincidence allowed)."""
    nu = cfg.constants.speed_of_sound
    w = cfg.omegas()[None, :]
    src = cfg.source
    d_conv = np.abs(distortion_conventional(w, cfg))
    g_all = cfg.constants.xi ** 2 * cfg.dc * np.linalg.norm(points - src, axis=1) / cfg.sur
    if np.any(np.linalg.norm(points - src, axis=1) <= 0):
        raise GeometryError("auxiliary grid point coincides with the source")
    v = (src - cfg.centroid) / np.linalg.norm(src - cfg.centroid)
    d_a = np.linalg.norm(points - src, axis=1)
    acc = np.zeros(len(points))
    for o in cfg.orientations_deg:
        mi, mj = cfg.mic_pair(o)
        d_ai = np.linalg.norm(points - mi, axis=1)[:, None]
        d_aj = np.linalg.norm(points - mj, axis=1)[:, None]
        if cfg.tdoa_mode == FAR_FIELD:
            tau_ia = (-((mi - points) @ v) / nu)[:, None]
            tau_aj = (-((points - mj) @ v) / nu)[:, None]
        else:
            tau_ia = ((np.linalg.norm(src - mi) - d_a) / nu)[:, None]
            tau_aj = ((d_a - np.linalg.norm(src - mj)) / nu)[:, None]
        g = g_all[:, None]
        s_ai = isotropic_coherence(w, d_ai, cfg.constants)
        s_aj = isotropic_coherence(w, d_aj, cfg.constants)
        da = g * (s_ai * np.exp(-1j * w * tau_aj) + s_aj * np.exp(-1j * w * tau_ia)) \
            + g * g * s_ai * s_aj
        acc += heaviside(d_conv - np.abs(da)).mean(axis=1)
    return acc / len(cfg.orientations_deg)


@dataclass
class PMap:
    """P_avg over a rectangular lattice; ``p_avg[iy, ix]`` belongs to ``(xs[ix], ys[iy])``."""

    xs: np.ndarray
    ys: np.ndarray
    p_avg: np.ndarray
    config: DistortionConfig
    contour_levels: tuple = (0.5, 0.9)

    def rows(self):
        for iy, y in enumerate(self.ys):
            for ix, x in enumerate(self.xs):
                yield float(x), float(y), float(self.p_avg[iy, ix])

    def write_csv(self, path) -> Path:
        path = Path(path)
        with open(path, "w", newline="") as fh:
            fh.write("x,y,p_avg\n")
            for x, y, p in self.rows():
                fh.write(f"{x:.6f},{y:.6f},{p:.10f}\n")
        return path

    def write_metadata(self, path) -> Path:
        path = Path(path)
        meta = {
            "config": self.config.to_dict(),
            "grid": {"x_min": float(self.xs[0]), "x_max": float(self.xs[-1]), "nx": len(self.xs),
                     "y_min": float(self.ys[0]), "y_max": float(self.ys[-1]), "ny": len(self.ys)},
            "contour_levels": list(self.contour_levels),
            "scene": {"centroid": [0.0, 0.0, 0.0], "source": self.config.source.tolist()},
        }
        path.write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")
        return path


def p_avg_sweep(xs: Sequence[float], ys: Sequence[float], cfg: DistortionConfig,
                z: float = 0.0, chunk: int = 256) -> PMap:
    """Evaluate P_avg on every point of the ``xs`` x ``ys`` lattice (plane height ``z``)."""
    xs = np.asarray(xs, dtype=float).reshape(-1)
    ys = np.asarray(ys, dtype=float).reshape(-1)
    gx, gy = np.meshgrid(xs, ys)
    pts = np.stack([gx.ravel(), gy.ravel(), np.full(gx.size, float(z))], axis=1)
    out = np.empty(len(pts))
    for start in range(0, len(pts), chunk):
        out[start:start + chunk] = _p_avg_many(pts[start:start + chunk], cfg)
    return PMap(xs, ys, out.reshape(gy.shape), cfg)


def ray_profile(cfg: DistortionConfig, max_distance: float = 2.0, step: float = 0.01,
                direction_deg: float = 0.0) -> tuple[np.ndarray, np.ndarray]:
    """P_avg sampled along a ray from the centroid (0 deg = directly away from the source)."""
    n = int(round(max_distance / step))
    r = np.arange(n + 1) * step
    a = math.radians(direction_deg)
    pts = np.stack([r * math.cos(a), r * math.sin(a), np.zeros_like(r)], axis=1)
    return r, _p_avg_many(pts, cfg)


def crossing_distance(cfg: DistortionConfig, level: float = 0.5, max_distance: float = 2.0,
                      step: float = 0.01, direction_deg: float = 0.0) -> float:
    """Distance from the centroid where P_avg first rises above ``level`` along a ray.

    Linear interpolation between the bracketing samples; ``nan`` if never crossed.
    """
    r, p = ray_profile(cfg, max_distance, step, direction_deg)
    above = np.nonzero(p > level)[0]
    if len(above) == 0:
        return float("nan")
    k = int(above[0])
    if k == 0:
        return 0.0
    r0, r1, p0, p1 = r[k - 1], r[k], p[k - 1], p[k]
    return float(r0 + (level - p0) * (r1 - r0) / (p1 - p0))
