"""Experiment configuration: YAML files parsed into validated dataclasses.

Every command reads one YAML mapping. Unknown keys are rejected so typos do
not silently fall back to defaults. ``--set a.b=value`` overrides are merged
before validation.
"""

from __future__ import annotations

import copy
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Optional

import numpy as np
import yaml

from auxsrp.model import EXACT, FAR_FIELD
from auxsrp.sim.ism import RoomSpec
from auxsrp.sim.scene import SceneConfig
from auxsrp.spectral import SpectralConfigError, StftConfig


class ConfigError(ValueError):
    """Invalid or inconsistent experiment configuration."""


def load_yaml(path) -> dict:
    """Read a YAML mapping. OSError propagates (an I/O failure, not a config error)."""
    text = Path(path).read_text()
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError(f"{path}: not valid YAML ({exc})") from exc
    if data is None:
        return {}
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: top level must be a mapping")
    return data


def apply_overrides(data: dict, overrides) -> dict:
    """Apply ``dotted.key=value`` strings; values are parsed as YAML scalars/lists."""
    out = copy.deepcopy(data)
    for item in overrides or []:
        if "=" not in item:
            raise ConfigError(f"override {item!r} is not of the form key=value")
        key, raw = item.split("=", 1)
        try:
            value = yaml.safe_load(raw)
        except yaml.YAMLError as exc:
            raise ConfigError(f"override {item!r}: {exc}") from exc
        node = out
        parts = key.strip().split(".")
        for p in parts[:-1]:
            nxt = node.setdefault(p, {})
            if not isinstance(nxt, dict):
                raise ConfigError(f"override {item!r}: {p!r} is not a section")
            node = nxt
        node[parts[-1]] = value
    return out


class _Section:
    """Small helper that pops typed values out of a mapping and tracks leftovers."""

    def __init__(self, data: Optional[dict], name: str):
        if data is None:
            data = {}
        if not isinstance(data, dict):
            raise ConfigError(f"section {name!r} must be a mapping")
        self.data = dict(data)
        self.name = name

    def _key(self, key):
        return f"{self.name}.{key}" if self.name else key

    def get(self, key, default=None):
        return self.data.pop(key, default)

    def number(self, key, default, lo=-math.inf, hi=math.inf, allow_none=False, strict_lo=False):
        v = self.data.pop(key, default)
        if v is None and allow_none:
            return None
        try:
            v = float(v)
        except (TypeError, ValueError):
            raise ConfigError(f"{self._key(key)} must be a number, got {v!r}") from None
        if not math.isfinite(v):
            raise ConfigError(f"{self._key(key)} must be finite")
        if (v <= lo if strict_lo else v < lo) or v > hi:
            raise ConfigError(f"{self._key(key)} = {v} outside [{lo}, {hi}]")
        return v

    def integer(self, key, default, lo=1):
        v = self.data.pop(key, default)
        if isinstance(v, bool) or not isinstance(v, (int, np.integer)):
            if isinstance(v, float) and v.is_integer():
                v = int(v)
            else:
                raise ConfigError(f"{self._key(key)} must be an integer, got {v!r}")
        if v < lo:
            raise ConfigError(f"{self._key(key)} must be >= {lo}, got {v}")
        return int(v)

    def vector(self, key, default, size=3):
        v = self.data.pop(key, default)
        try:
            arr = [float(x) for x in v]
        except (TypeError, ValueError):
            raise ConfigError(f"{self._key(key)} must be a list of {size} numbers") from None
        if len(arr) == 2 and size == 3:
            arr.append(0.0)
        if len(arr) != size or not all(math.isfinite(x) for x in arr):
            raise ConfigError(f"{self._key(key)} must be a list of {size} finite numbers")
        return tuple(arr)

    def number_list(self, key, default):
        v = self.data.pop(key, default)
        if isinstance(v, dict):
            v = _expand_range(v, self._key(key))
        if not isinstance(v, (list, tuple)) or len(v) == 0:
            raise ConfigError(f"{self._key(key)} must be a non-empty list")
        try:
            out = [float(x) for x in v]
        except (TypeError, ValueError):
            raise ConfigError(f"{self._key(key)} must contain numbers") from None
        if not all(math.isfinite(x) for x in out):
            raise ConfigError(f"{self._key(key)} must contain finite numbers")
        return out

    def choice(self, key, default, options):
        v = self.data.pop(key, default)
        if v not in options:
            raise ConfigError(f"{self._key(key)} must be one of {sorted(options)}, got {v!r}")
        return v

    def section(self, key):
        return _Section(self.data.pop(key, None), self._key(key))

    def done(self):
        if self.data:
            keys = ", ".join(sorted(self._key(k) for k in self.data))
            raise ConfigError(f"unknown configuration keys: {keys}")


def _expand_range(spec: dict, name: str) -> list:
    """``{start, stop, step}`` with ``stop`` included when it lands on the lattice."""
    try:
        start, stop, step = float(spec["start"]), float(spec["stop"]), float(spec["step"])
    except (KeyError, TypeError, ValueError):
        raise ConfigError(f"{name}: a range needs numeric start, stop and step") from None
    if step <= 0 or stop < start:
        raise ConfigError(f"{name}: need step > 0 and stop >= start")
    n = int(math.floor((stop - start) / step + 1e-9)) + 1
    if n > 100000:
        raise ConfigError(f"{name}: range has too many points ({n})")
    return [round(start + i * step, 12) for i in range(n)]


# ---------------------------------------------------------------- model sweep

@dataclass
class SweepConfig:
    sur_db: list = field(default_factory=lambda: [10.0, 0.0])
    d12: float = 0.05
    dc: float = 2.0
    f_max_hz: float = 8000.0
    num_freqs: int = 1025
    orientations_deg: list = field(default_factory=lambda: [float(o) for o in range(0, 180, 10)])
    tdoa_mode: str = FAR_FIELD
    speed_of_sound: float = 343.0
    xs: list = field(default_factory=list)
    ys: list = field(default_factory=list)
    z: float = 0.0
    crossing_level: float = 0.5
    crossing_max_distance: float = 2.0
    crossing_step: float = 0.01


def parse_sweep(data: dict) -> SweepConfig:
    root = _Section(data, "")
    root.get("command")
    s = root.section("model")
    cfg = SweepConfig()
    cfg.sur_db = s.number_list("sur_db", cfg.sur_db)
    cfg.d12 = s.number("d12", cfg.d12, lo=0, strict_lo=True)
    cfg.dc = s.number("dc", cfg.dc, lo=0, strict_lo=True)
    cfg.f_max_hz = s.number("f_max_hz", cfg.f_max_hz, lo=0, strict_lo=True)
    cfg.num_freqs = s.integer("num_freqs", cfg.num_freqs, lo=2)
    cfg.orientations_deg = s.number_list("orientations_deg", cfg.orientations_deg)
    cfg.tdoa_mode = s.choice("tdoa_mode", cfg.tdoa_mode, {FAR_FIELD, EXACT})
    cfg.speed_of_sound = s.number("speed_of_sound", cfg.speed_of_sound, lo=0, strict_lo=True)
    s.done()
    g = root.section("grid")
    cfg.xs = g.number_list("x", {"start": -1.0, "stop": 3.0, "step": 0.05})
    cfg.ys = g.number_list("y", {"start": -2.0, "stop": 2.0, "step": 0.05})
    cfg.z = g.number("z", 0.0)
    g.done()
    c = root.section("crossing")
    cfg.crossing_level = c.number("level", cfg.crossing_level, lo=0, hi=1)
    cfg.crossing_max_distance = c.number("max_distance", cfg.crossing_max_distance, lo=0, strict_lo=True)
    cfg.crossing_step = c.number("step", cfg.crossing_step, lo=0, strict_lo=True)
    c.done()
    root.done()
    if len(cfg.xs) * len(cfg.ys) > 2_000_000:
        raise ConfigError("grid is too large (more than 2e6 points)")
    return cfg


# ------------------------------------------------------------------- campaign

@dataclass
class AnalysisConfig:
    frame_length: int = 512
    hop: int = 256
    window: str = "sqrt-hann"
    smoothing: float = 0.98
    resolution_deg: float = 1.0
    band: Optional[tuple] = None  # inclusive STFT bin range; None means 1..K-1

    def stft(self) -> StftConfig:
        return StftConfig(16000, self.frame_length, self.hop, self.window)


def _parse_analysis(s: _Section) -> AnalysisConfig:
    a = AnalysisConfig()
    a.frame_length = s.integer("frame_length", a.frame_length, lo=2)
    a.hop = s.integer("hop", a.hop, lo=1)
    a.window = s.choice("window", a.window, {"sqrt-hann", "hann", "rect"})
    a.smoothing = s.number("smoothing", a.smoothing, lo=0.0, hi=0.999999)
    a.resolution_deg = s.number("resolution_deg", a.resolution_deg, lo=0, hi=90, strict_lo=True)
    band = s.get("band")
    s.done()
    if band is not None:
        k_max = a.frame_length // 2
        if (not isinstance(band, (list, tuple)) or len(band) != 2
                or not all(isinstance(b, int) and not isinstance(b, bool) for b in band)):
            raise ConfigError("analysis.band must be a pair of integer bin indices [lo, hi]")
        if not 1 <= band[0] <= band[1] <= k_max:
            raise ConfigError(f"analysis.band {list(band)} must satisfy 1 <= lo <= hi <= {k_max}")
        a.band = (int(band[0]), int(band[1]))
    if abs(360.0 / a.resolution_deg - round(360.0 / a.resolution_deg)) > 1e-9:
        raise ConfigError("analysis.resolution_deg must divide 360")
    try:
        a.stft()
    except SpectralConfigError as exc:
        raise ConfigError(f"analysis: {exc}") from exc
    return a


@dataclass
class CampaignConfig:
    scene: SceneConfig
    orientations_deg: list
    signals_per_orientation: int
    duration_s: float
    source_wavs: list
    aux_positions: list
    analysis: AnalysisConfig
    beta_max: float = 0.99
    wall_margin: float = 0.5

    def to_dict(self) -> dict:
        d = asdict(self)
        d["scene"]["aux_positions"] = [list(p) for p in self.aux_positions]
        return d


def aux_lattice(xs, ys, z, centroid, room_dims, min_distance, wall_margin, limit=None) -> list:
    """Lattice points kept when far enough from the CMA centroid and every wall.

    Points are taken in x-major order; ``limit`` keeps the first ``limit``.
    """
    c = np.asarray(centroid, dtype=float)
    dims = np.asarray(room_dims, dtype=float)
    out = []
    for x in xs:
        for y in ys:
            p = np.array([x, y, z])
            if math.hypot(x - c[0], y - c[1]) < min_distance - 1e-12:
                continue
            if np.any(p < wall_margin - 1e-12) or np.any(p > dims - wall_margin + 1e-12):
                continue
            out.append(tuple(float(v) for v in p))
    return out if limit is None else out[:limit]


def parse_campaign(data: dict) -> CampaignConfig:
    root = _Section(data, "")
    root.get("command")
    s = root.section("scene")
    room_dims = s.vector("room", (6.0, 6.0, 2.4))
    if min(room_dims) <= 0:
        raise ConfigError("scene.room dimensions must be positive")
    source = s.vector("source", (2.0, 3.0, 1.75))
    centroid = s.vector("centroid", (4.0, 3.0, 1.75))
    num_mics = s.integer("num_mics", 3, lo=2)
    if num_mics > 3:
        raise ConfigError("scene.num_mics must be 2 or 3")
    spacing = s.number("spacing", 0.05, lo=0, strict_lo=True)
    drr = s.number("drr_db", -1.4, lo=-40, hi=40, allow_none=True)
    rsnr = s.number("rsnr_db", -1.4, lo=-40, hi=60, allow_none=True)
    noise_spectrum = s.choice("noise_spectrum", "speech", {"speech", "white"})
    waves = s.integer("num_plane_waves", 512, lo=64)
    c = s.number("speed_of_sound", 343.0, lo=0, strict_lo=True)
    direct_ms = s.number("direct_window_ms", 1.0, lo=0)
    orientations = s.number_list("orientations_deg", [float(o) for o in range(0, 120, 10)])
    per = s.integer("signals_per_orientation", 1)
    duration = s.number("duration_s", 3.0, lo=0.05, hi=60)
    wavs = s.get("source_wavs", []) or []
    beta_max = s.number("beta_max", 0.99, lo=0, hi=0.999, strict_lo=True)
    s.done()
    if not isinstance(wavs, list) or not all(isinstance(w, str) for w in wavs):
        raise ConfigError("scene.source_wavs must be a list of paths")
    if drr is None and rsnr is not None:
        raise ConfigError("scene.rsnr_db needs a reverberant room (set drr_db)")
    room = RoomSpec(room_dims)
    for name, p in (("source", source), ("centroid", centroid)):
        if not room.contains(p, spacing):
            raise ConfigError(f"scene.{name} {list(p)} is not inside the room")
    if np.linalg.norm(np.subtract(source, centroid)) <= spacing:
        raise ConfigError("scene.source is too close to the array")

    a = root.section("aux")
    explicit = a.get("positions")
    margin = a.number("wall_margin", 0.5, lo=0)
    if explicit is not None:
        clash = {"x", "y", "z", "min_distance", "limit"} & set(a.data)
        if clash:
            raise ConfigError(f"aux.positions cannot be combined with {sorted(clash)}")
        if not isinstance(explicit, list):
            raise ConfigError("aux.positions must be a list of [x, y, z]")
        tmp = _Section({f"p{i}": p for i, p in enumerate(explicit)}, "aux.positions")
        aux = [tmp.vector(f"p{i}", None) for i in range(len(explicit))]
    else:
        xs = a.number_list("x", [0.75, 1.85, 2.95, 4.05, 5.25])
        ys = a.number_list("y", [0.75, 1.85, 2.95, 4.05, 5.25])
        z = a.number("z", centroid[2])
        min_d = a.number("min_distance", 1.0, lo=0)
        limit = a.get("limit", 16)
        if limit is not None and (not isinstance(limit, int) or limit < 1):
            raise ConfigError("aux.limit must be a positive integer or null")
        aux = aux_lattice(xs, ys, z, centroid, room_dims, min_d, margin, limit)
    a.done()
    for p in aux:
        if not room.contains(p):
            raise ConfigError(f"aux position {list(p)} is not inside the room")

    analysis = _parse_analysis(root.section("analysis"))
    root.done()
    scene = SceneConfig(room_dimensions=room_dims, source=source, centroid=centroid, num_mics=num_mics,
                        spacing=spacing, aux_positions=list(aux), drr_db=drr, rsnr_db=rsnr,
                        direct_window_ms=direct_ms, num_plane_waves=waves,
                        noise_spectrum=noise_spectrum, speed_of_sound=c)
    return CampaignConfig(scene, orientations, per, duration, list(wavs), list(aux), analysis,
                          beta_max, margin)


# --------------------------------------------------------------------- locate

@dataclass
class LocateConfig:
    wav: Optional[str]
    mic_positions: list
    mode: str
    true_azimuth_deg: Optional[float]
    analysis: AnalysisConfig
    speed_of_sound: float = 343.0
    write_grid: bool = True


def parse_locate(data: dict) -> LocateConfig:
    root = _Section(data, "")
    root.get("command")
    wav = root.get("wav")
    mode = root.choice("mode", "conventional", {"conventional", "auxiliary"})
    truth = root.number("true_azimuth_deg", None, allow_none=True)
    write_grid = bool(root.get("write_grid", True))
    g = root.section("array")
    explicit = g.get("mic_positions")
    c = g.number("speed_of_sound", 343.0, lo=0, strict_lo=True)
    if explicit is not None:
        clash = {"centroid", "spacing", "orientation_deg", "num_mics"} & set(g.data)
        if clash:
            raise ConfigError(f"array.mic_positions cannot be combined with {sorted(clash)}")
        if not isinstance(explicit, list) or len(explicit) < 2:
            raise ConfigError("array.mic_positions must list at least two positions")
        tmp = _Section({f"m{i}": p for i, p in enumerate(explicit)}, "array.mic_positions")
        mics = [list(tmp.vector(f"m{i}", None)) for i in range(len(explicit))]
    else:
        from auxsrp.core import ArrayGeometry
        centroid = g.vector("centroid", (0.0, 0.0, 0.0))
        spacing = g.number("spacing", 0.05, lo=0, strict_lo=True)
        o = math.radians(g.number("orientation_deg", 0.0))
        n = g.integer("num_mics", 3, lo=2)
        if n == 3:
            geom = ArrayGeometry.triangle(centroid, spacing, o)
        elif n == 2:
            geom = ArrayGeometry.pair(centroid, spacing, o)
        else:
            raise ConfigError("array.num_mics must be 2 or 3 (or give mic_positions)")
        mics = geom.mic_positions.tolist()
    g.done()
    analysis = _parse_analysis(root.section("analysis"))
    root.done()
    if wav is not None and not isinstance(wav, str):
        raise ConfigError("wav must be a path")
    return LocateConfig(wav, mics, mode, truth, analysis, c, write_grid)


# ------------------------------------------------------------------------ rir

@dataclass
class RirConfig:
    room: tuple
    source: tuple
    mics: list
    fs: float
    drr_db: Optional[float]
    beta: Optional[float]
    beta_max: float
    direct_window_ms: float
    speed_of_sound: float


def parse_rir(data: dict) -> RirConfig:
    root = _Section(data, "")
    root.get("command")
    s = root.section("room")
    dims = s.vector("dimensions", (6.0, 6.0, 2.4))
    if min(dims) <= 0:
        raise ConfigError("room.dimensions must be positive")
    beta = s.number("reflection_coefficient", None, lo=0, hi=0.999, allow_none=True)
    drr = s.number("drr_db", None, lo=-40, hi=40, allow_none=True)
    beta_max = s.number("beta_max", 0.99, lo=0, hi=0.999, strict_lo=True)
    s.done()
    if (beta is None) == (drr is None):
        raise ConfigError("give exactly one of room.reflection_coefficient and room.drr_db")
    source = root.vector("source", (2.0, 3.0, 1.75))
    raw_mics = root.get("mics", [[4.0, 3.0, 1.75]])
    if not isinstance(raw_mics, list) or not raw_mics:
        raise ConfigError("mics must be a non-empty list of positions")
    tmp = _Section({f"m{i}": p for i, p in enumerate(raw_mics)}, "mics")
    mics = [tmp.vector(f"m{i}", None) for i in range(len(raw_mics))]
    fs = root.number("fs", 16000.0, lo=1000, hi=192000)
    direct_ms = root.number("direct_window_ms", 1.0, lo=0)
    c = root.number("speed_of_sound", 343.0, lo=0, strict_lo=True)
    root.done()
    room = RoomSpec(dims)
    for p in [source] + mics:
        if not room.contains(p):
            raise ConfigError(f"position {list(p)} is not inside the room")
    return RirConfig(dims, source, mics, fs, drr, beta, beta_max, direct_ms, c)


PARSERS = {
    "model-sweep": parse_sweep,
    "campaign": parse_campaign,
    "locate": parse_locate,
    "rir": parse_rir,
}


def parse(command: str, data: dict) -> Any:
    declared = data.get("command")
    if declared is not None and declared != command:
        raise ConfigError(f"config is for command {declared!r}, not {command!r}")
    return PARSERS[command](data)
