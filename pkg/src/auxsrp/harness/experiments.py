"""Experiment runners behind the CLI subcommands.

Each runner takes a parsed config plus a :class:`RunContext`, writes its CSV
and metadata files into the context's output directory and returns an
in-memory result for programmatic use (tests, notebooks).
"""

from __future__ import annotations

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from auxsrp.core import AcousticConstants, ArrayGeometry, DoaVector, doa_error
from auxsrp.harness.config import (CampaignConfig, ConfigError, LocateConfig, RirConfig,
                                   SweepConfig)
from auxsrp.harness.runio import write_csv, write_metadata
from auxsrp.model import DistortionConfig, crossing_distance, p_avg_sweep
from auxsrp.sim.ism import RoomSpec, ism_rir, rir_drr_db, t60_schroeder
from auxsrp.sim.rng import derive_seed
from auxsrp.sim.scene import RirCache, calibrate_reflection, render_scenario
from auxsrp.sim.speech import SourceSignal, load_source, read_wav, synth_speech, write_wav
from auxsrp.srp import (AUXILIARY, CONVENTIONAL, azimuth_grid, cma_pairs, estimate_doa,
                        srp_function, srp_spectra_from_signals)

log = logging.getLogger(__name__)


@dataclass
class RunContext:
    out_dir: Path
    seed: int = 0
    threads: int = 1
    dump_stems: bool = False


def _map(ctx: RunContext, fn, items):
    """Ordered map, optionally on a thread pool (numpy/scipy release the GIL)."""
    items = list(items)
    if ctx.threads <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=ctx.threads) as ex:
        return list(ex.map(fn, items))


# ---------------------------------------------------------------- model sweep

@dataclass
class SweepResult:
    maps: dict
    crossings: dict
    files: list


def _sur_tag(sur: float) -> str:
    return f"{sur:+.1f}".replace("+", "p").replace("-", "m").replace(".", "_")


def run_model_sweep(cfg: SweepConfig, ctx: RunContext) -> SweepResult:
    out = Path(ctx.out_dir)
    dcfgs = [DistortionConfig(sur_db=s, d12=cfg.d12, dc=cfg.dc, omega0=2 * math.pi * cfg.f_max_hz,
                              num_freqs=cfg.num_freqs, orientations_deg=tuple(cfg.orientations_deg),
                              tdoa_mode=cfg.tdoa_mode,
                              constants=AcousticConstants(cfg.speed_of_sound))
             for s in cfg.sur_db]

    def one(dc):
        pm = p_avg_sweep(cfg.xs, cfg.ys, dc, z=cfg.z)
        r = crossing_distance(dc, cfg.crossing_level, cfg.crossing_max_distance, cfg.crossing_step)
        return pm, r

    results = _map(ctx, one, dcfgs)
    maps, crossings, files = {}, {}, []
    for sur, (pm, r) in zip(cfg.sur_db, results):
        tag = _sur_tag(sur)
        files.append(pm.write_csv(out / f"p_avg_sur_{tag}dB.csv").name)
        files.append(pm.write_metadata(out / f"p_avg_sur_{tag}dB.json").name)
        maps[sur], crossings[sur] = pm, r
        log.info("SUR %+.1f dB: P_avg = %.2f crossing at %.3f m", sur, cfg.crossing_level, r)
    rows = [(s, cfg.crossing_level, crossings[s]) for s in cfg.sur_db]
    files.append(write_csv(out / "crossings.csv", ["sur_db", "level", "distance_m"], rows, 6).name)
    write_metadata(out, "model-sweep", ctx.seed, asdict(cfg),
                   {"crossing_distance_m": {str(s): crossings[s] for s in cfg.sur_db}, "files": files})
    return SweepResult(maps, crossings, files)


# ------------------------------------------------------------------- campaign

@dataclass
class ScenarioRecord:
    index: int
    orientation_deg: float
    signal_index: int
    signal_seed: int
    noise_seed: int
    true_azimuth_deg: float
    baseline_estimate_deg: float
    baseline_error_deg: float
    aux_estimates_deg: list
    aux_errors_deg: list
    drr_db: float
    rir_drr_db: float
    rsnr_db: float
    sur_db: float


@dataclass
class CampaignResult:
    aux_positions: list
    scenarios: list = field(default_factory=list)
    calibration: dict = field(default_factory=dict)

    @property
    def baseline_errors(self) -> np.ndarray:
        return np.array([s.baseline_error_deg for s in self.scenarios])

    @property
    def aux_errors(self) -> np.ndarray:
        """(scenarios, aux positions) array of aux-mode errors."""
        return np.array([s.aux_errors_deg for s in self.scenarios]).reshape(len(self.scenarios), -1)

    @property
    def baseline_mean(self) -> float:
        return float(np.mean(self.baseline_errors))

    @property
    def aux_means(self) -> np.ndarray:
        return self.aux_errors.mean(axis=0)

    @property
    def did_not_reduce(self) -> np.ndarray:
        """True where the aux microphone failed to lower the mean error."""
        return self.aux_means >= self.baseline_mean

    @property
    def fraction_improved(self) -> float:
        return float(np.mean(~self.did_not_reduce)) if len(self.aux_positions) else float("nan")


def _campaign_sources(cfg: CampaignConfig, ctx: RunContext) -> list:
    """(orientation_index, signal_index, orientation, SourceSignal, signal_seed) per scenario."""
    fs = cfg.scene.fs
    wavs = [load_source(p, fs) for p in cfg.source_wavs]
    out = []
    for oi, o in enumerate(cfg.orientations_deg):
        for si in range(cfg.signals_per_orientation):
            seed = derive_seed(ctx.seed, 1, oi, si)
            if wavs:
                src = wavs[(oi * cfg.signals_per_orientation + si) % len(wavs)]
                n = int(round(cfg.duration_s * fs))
                x = src.samples[:n]
                src = SourceSignal(x, fs, src.kind, None)
            else:
                src = synth_speech(cfg.duration_s, fs, seed)
            out.append((oi, si, o, src, seed))
    return out


def run_campaign(cfg: CampaignConfig, ctx: RunContext) -> CampaignResult:
    """Render every (orientation, signal) scenario once and score both modes.

    The conventional estimate uses only the CMA channels, so it is computed
    once per scenario and shared by all aux positions.
    """
    out = Path(ctx.out_dir)
    scene = cfg.scene
    c = scene.constants
    room = RoomSpec(scene.room_dimensions, max_length_s=1.0)
    calib = {}
    if scene.drr_db is not None:
        geom0 = scene.geometry(cfg.orientations_deg[0])
        room, rep = calibrate_reflection(room, geom0.mic_positions, scene.source, scene.drr_db,
                                         scene.fs, c, scene.direct_window_ms, beta_max=cfg.beta_max)
        calib = {"reflection_coefficient": rep.beta, "target_drr_db": rep.target_drr_db,
                 "achieved_rir_drr_db": rep.achieved_drr_db, "per_mic_rir_drr_db": rep.per_mic_drr_db,
                 "sabine_t60_s": rep.sabine_t60, "schroeder_t60_s": rep.schroeder_t60,
                 "iterations": rep.iterations}
        log.info("calibrated beta = %.4f (Sabine T60 %.3f s)", rep.beta, rep.sabine_t60)
    else:
        calib = {"reflection_coefficient": 0.0}
    scenarios = _campaign_sources(cfg, ctx)
    cache = RirCache()
    azimuths = azimuth_grid(cfg.analysis.resolution_deg)
    stft_cfg = cfg.analysis.stft()
    lam = cfg.analysis.smoothing
    band = cfg.analysis.band
    if ctx.dump_stems:
        (out / "stems").mkdir(exist_ok=True)

    def one(item):
        k, (oi, si, o, src, sig_seed) = item
        noise_seed = derive_seed(ctx.seed, 2, oi, si)
        sc_cfg = _with_orientation(scene, o)
        sc = render_scenario(sc_cfg, src, room, noise_seed, cache)
        geom = sc_cfg.geometry()
        y = sc.mixed
        base = srp_spectra_from_signals(y, geom.num_mics, CONVENTIONAL, (), stft_cfg, lam)[0]
        v0 = estimate_doa(srp_function(base, geom, azimuths, band, c))
        aux_est, aux_err = [], []
        if sc.aux_channels:
            for sp in srp_spectra_from_signals(y, geom.num_mics, AUXILIARY, sc.aux_channels, stft_cfg, lam):
                v = estimate_doa(srp_function(sp, geom, azimuths, band, c))
                aux_est.append(v.degrees)
                aux_err.append(doa_error(v, sc.doa))
        if ctx.dump_stems:
            for name, arr in (("direct", sc.direct), ("reverb", sc.reverb), ("noise", sc.noise),
                              ("mixed", y)):
                write_wav(out / "stems" / f"scenario_{k:04d}_{name}.wav", arr, sc.fs)
        return ScenarioRecord(k, float(o), si, sig_seed, noise_seed, sc.doa.degrees, v0.degrees,
                              doa_error(v0, sc.doa), aux_est, aux_err, sc.drr_db, sc.rir_drr_db,
                              sc.rsnr_db, sc.sur_db)

    records = _map(ctx, one, list(enumerate(scenarios)))
    result = CampaignResult(list(cfg.aux_positions), records, calib)
    _write_campaign(result, cfg, ctx)
    return result


def _with_orientation(scene, o):
    from dataclasses import replace
    return replace(scene, orientation_deg=float(o), aux_positions=list(scene.aux_positions))


def _write_campaign(res: CampaignResult, cfg: CampaignConfig, ctx: RunContext):
    out = Path(ctx.out_dir)
    header = ["scenario", "orientation_deg", "signal", "signal_seed", "noise_seed", "mode",
              "aux_index", "aux_x", "aux_y", "aux_z", "true_azimuth_deg", "estimate_deg",
              "error_deg", "did_not_reduce"]
    dnr = res.did_not_reduce if res.aux_positions else []
    rows = []
    for s in res.scenarios:
        common = [s.index, s.orientation_deg, s.signal_index, s.signal_seed, s.noise_seed]
        rows.append(common + [CONVENTIONAL, -1, "", "", "", s.true_azimuth_deg,
                              s.baseline_estimate_deg, s.baseline_error_deg, ""])
        for a, p in enumerate(res.aux_positions):
            rows.append(common + [AUXILIARY, a, p[0], p[1], p[2], s.true_azimuth_deg,
                                  s.aux_estimates_deg[a], s.aux_errors_deg[a], bool(dnr[a])])
    files = [write_csv(out / "campaign_scenarios.csv", header, rows).name]

    summary = [[a, p[0], p[1], p[2], len(res.scenarios), float(res.aux_means[a]), res.baseline_mean,
                bool(dnr[a])] for a, p in enumerate(res.aux_positions)]
    files.append(write_csv(out / "campaign_summary.csv",
                           ["aux_index", "aux_x", "aux_y", "aux_z", "scenarios", "mean_error_deg",
                            "baseline_mean_error_deg", "did_not_reduce"], summary).name)
    levels = [[s.index, s.orientation_deg, s.signal_index, s.drr_db, s.rir_drr_db, s.rsnr_db, s.sur_db]
              for s in res.scenarios]
    files.append(write_csv(out / "campaign_levels.csv",
                           ["scenario", "orientation_deg", "signal", "stem_drr_db", "rir_drr_db",
                            "rsnr_db", "sur_db"], levels, 6).name)
    results = {
        "calibration": res.calibration,
        "baseline_mean_error_deg": res.baseline_mean,
        "aux_fraction_improved": res.fraction_improved if res.aux_positions else None,
        "mean_stem_drr_db": float(np.mean([s.drr_db for s in res.scenarios])),
        "mean_rsnr_db": float(np.mean([s.rsnr_db for s in res.scenarios])),
        "mean_sur_db": float(np.mean([s.sur_db for s in res.scenarios])),
        "scenarios": len(res.scenarios),
        "files": files,
    }
    write_metadata(out, "campaign", ctx.seed, cfg.to_dict(), results)


# --------------------------------------------------------------------- locate

@dataclass
class LocateReport:
    azimuth_deg: float
    error_deg: Optional[float]
    pair_summary: list
    text: str


def _pair_summary(spectra, fs: float, c: float, geom: ArrayGeometry) -> list:
    """Per pair: mean |psi| over bins and the lag of the GCC peak (seconds)."""
    rows = []
    for p, (i, j) in enumerate(spectra.pairs):
        psi = spectra.values[p]
        gcc = np.fft.irfft(psi)
        n = len(gcc)
        max_lag = int(math.ceil(geom.distance(i, j) / c * fs)) + 1
        lags = np.r_[np.arange(0, max_lag + 1), np.arange(-max_lag, 0)]
        k = int(np.argmax(gcc[lags % n]))
        rows.append((i, j, float(np.mean(np.abs(psi[1:-1]))), float(lags[k] / fs)))
    return rows


def run_locate(cfg: LocateConfig, ctx: RunContext) -> LocateReport:
    if cfg.wav is None:
        raise ConfigError("no input WAV given (config key 'wav' or --wav)")
    x, fs = read_wav(cfg.wav)
    geom = ArrayGeometry(np.array(cfg.mic_positions))
    m = geom.num_mics
    need = m + (1 if cfg.mode == AUXILIARY else 0)
    if x.shape[0] != need:
        raise ConfigError(f"{cfg.wav} has {x.shape[0]} channel(s); {cfg.mode} mode with {m} array "
                          f"microphones needs {need} (auxiliary channel last)")
    stft_cfg = cfg.analysis.stft()
    if fs != stft_cfg.sample_rate:
        from dataclasses import replace
        stft_cfg = replace(stft_cfg, sample_rate=fs)
    aux = (m,) if cfg.mode == AUXILIARY else ()
    c = AcousticConstants(cfg.speed_of_sound)
    spectra = srp_spectra_from_signals(x, m, cfg.mode, aux, stft_cfg, cfg.analysis.smoothing)[0]
    grid = srp_function(spectra, geom, azimuth_grid(cfg.analysis.resolution_deg), cfg.analysis.band, c)
    v = estimate_doa(grid)
    err = None if cfg.true_azimuth_deg is None else doa_error(v, DoaVector.from_degrees(cfg.true_azimuth_deg))
    pairs = _pair_summary(spectra, fs, c.speed_of_sound, geom)
    lines = [f"input: {cfg.wav} ({x.shape[0]} channels, {x.shape[1]} samples at {fs:g} Hz)",
             f"mode: {cfg.mode}",
             f"estimated azimuth: {v.degrees:.1f} deg"]
    if err is not None:
        lines.append(f"true azimuth: {cfg.true_azimuth_deg:.1f} deg, error: {err:.2f} deg")
    lines.append("pair  mean|psi|  gcc_peak_lag_s")
    lines += [f"{i}-{j}  {mag:.4f}  {lag:+.6e}" for i, j, mag, lag in pairs]
    text = "\n".join(lines) + "\n"
    out = Path(ctx.out_dir)
    (out / "locate_report.txt").write_text(text)
    files = ["locate_report.txt"]
    if cfg.write_grid:
        rows = zip(np.degrees(grid.azimuths), grid.values)
        files.append(write_csv(out / "srp_grid.csv", ["azimuth_deg", "power"], rows, 9).name)
    write_metadata(out, "locate", ctx.seed, asdict(cfg),
                   {"azimuth_deg": v.degrees, "error_deg": err, "files": files})
    return LocateReport(v.degrees, err, pairs, text)


# ------------------------------------------------------------------------ rir

@dataclass
class RirResult:
    reflection_coefficient: float
    samples: np.ndarray
    drr_db: list
    sabine_t60: float
    schroeder_t60: list


def run_rir(cfg: RirConfig, ctx: RunContext) -> RirResult:
    c = AcousticConstants(cfg.speed_of_sound)
    room = RoomSpec(cfg.room)
    calib = {}
    if cfg.drr_db is not None:
        room, rep = calibrate_reflection(room, np.array(cfg.mics), cfg.source, cfg.drr_db, cfg.fs, c,
                                         cfg.direct_window_ms, beta_max=cfg.beta_max)
        calib = {"target_drr_db": rep.target_drr_db, "achieved_rir_drr_db": rep.achieved_drr_db,
                 "iterations": rep.iterations}
    else:
        room = room.with_beta(cfg.beta)
    rirs = [ism_rir(room, cfg.source, m, cfg.fs, c) for m in cfg.mics]
    n = max(len(r) for r in rirs)
    h = np.zeros((len(rirs), n))
    for k, r in enumerate(rirs):
        h[k, :len(r)] = r.samples
    drr = [rir_drr_db(r, cfg.direct_window_ms) for r in rirs]
    sch = [t60_schroeder(r.samples, cfg.fs) if room.reflection_coefficient > 0 else 0.0 for r in rirs]
    out = Path(ctx.out_dir)
    write_wav(out / "rir.wav", h, cfg.fs)
    header = ["sample", "time_s"] + [f"mic{k}" for k in range(len(rirs))]
    rows = ([i, i / cfg.fs] + list(h[:, i]) for i in range(n))
    write_csv(out / "rir.csv", header, rows, 12)
    results = dict(calib, reflection_coefficient=room.reflection_coefficient,
                   sabine_t60_s=room.sabine_t60(c), schroeder_t60_s=sch, rir_drr_db=drr,
                   direct_index=[r.direct_index for r in rirs], length_samples=n,
                   files=["rir.wav", "rir.csv"])
    write_metadata(out, "rir", ctx.seed, asdict(cfg), results)
    return RirResult(room.reflection_coefficient, h, drr, room.sabine_t60(c), sch)
