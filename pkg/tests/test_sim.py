import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.signal import csd, resample, welch

from auxsrp.sim.ism import (RirBasis, RoomError, RoomSpec, ism_rir, rir_drr_db, split_rir,
                            t60_schroeder)
from auxsrp.sim.noise import fibonacci_sphere, isotropic_noise
from auxsrp.sim.scene import (CalibrationError, RirCache, SceneConfig, calibrate_reflection,
                              render_scenario)
from auxsrp.sim.speech import (SourceSignal, long_term_spectrum, read_wav, synth_speech,
                               write_wav)

FS = 16000.0
ROOM = RoomSpec()


def test_anechoic_integer_delay_peak():
    d = 343.0 * 100 / FS
    rir = ism_rir(ROOM, [1.0, 3.0, 1.5], [1.0 + d, 3.0, 1.5], FS)
    h = rir.samples
    assert int(np.argmax(np.abs(h))) == 100
    assert h[100] == pytest.approx(1 / (4 * math.pi * d), rel=1e-12)
    # integer delay: the windowed sinc collapses to a single tap
    assert np.count_nonzero(np.abs(h) > 1e-12) == 1


@pytest.mark.parametrize("d", [0.5, 1.7, 2.9])
def test_anechoic_fractional_delay_peak(d):
    rir = ism_rir(ROOM, [1.0, 1.0, 1.2], [1.0 + d, 1.0, 1.2], FS)
    peak = int(np.argmax(np.abs(rir.samples)))
    assert abs(peak - round(FS * d / 343.0)) <= 1
    # band-limited interpolation recovers the true peak amplitude
    up = resample(rir.samples, len(rir.samples) * 16)
    assert up.max() == pytest.approx(1 / (4 * math.pi * d), rel=0.05)


def test_room_validation():
    with pytest.raises(RoomError):
        RoomSpec(dimensions=(6, 0, 2))
    with pytest.raises(RoomError):
        RoomSpec(reflection_coefficient=1.0)
    with pytest.raises(RoomError):
        ism_rir(ROOM, [7, 1, 1], [1, 1, 1], FS)


def test_sabine_values():
    r = ROOM.with_beta(0.81)
    # 24 ln10 V / (c S (1 - beta^2)) with V = 86.4, S = 129.6
    assert r.sabine_t60() == pytest.approx(24 * math.log(10) * 86.4 / (343 * 129.6 * (1 - 0.81 ** 2)))
    assert r.eyring_t60() < r.sabine_t60()
    assert ROOM.sabine_t60() == pytest.approx(24 * math.log(10) * 86.4 / (343 * 129.6))


def test_reciprocity_and_basis():
    room = ROOM.with_beta(0.6)
    a, b = [1.2, 2.5, 1.0], [4.1, 3.3, 1.7]
    h1 = ism_rir(room, a, b, FS).samples
    h2 = ism_rir(room, b, a, FS).samples
    np.testing.assert_allclose(h1, h2, atol=1e-12)
    basis = RirBasis(room, a, b, FS, len(h1))
    np.testing.assert_allclose(basis.rir(0.6).samples, h1, atol=1e-12)


def test_split_and_drr():
    room = ROOM.with_beta(0.7)
    rir = ism_rir(room, [2, 3, 1.75], [4, 3, 1.75], FS)
    hd, hr = split_rir(rir)
    np.testing.assert_array_equal(hd + hr, rir.samples)
    assert np.count_nonzero(hd) <= 33
    # anechoic: only the sinc tails of the direct tap fall outside the +-1 ms window
    assert rir_drr_db(ism_rir(ROOM, [2, 3, 1.75], [4, 3, 1.75], FS)) > 25.0
    assert rir_drr_db(ism_rir(ROOM, [2, 3, 1.75], [2 + 343 * 93 / FS, 3, 1.75], FS)) > 200.0
    assert math.isfinite(rir_drr_db(rir))


def test_schroeder_on_exponential_decay():
    rng = np.random.default_rng(0)
    t = np.arange(int(0.8 * FS)) / FS
    h = rng.standard_normal(len(t)) * 10 ** (-3 * t / 0.25)  # 60 dB energy decay in 0.25 s
    assert t60_schroeder(h, FS) == pytest.approx(0.25, rel=0.05)
    assert math.isnan(t60_schroeder(np.r_[1.0, np.zeros(10)], FS))


def test_reverb_grows_with_beta():
    drr = [rir_drr_db(ism_rir(ROOM.with_beta(b), [2, 3, 1.75], [4, 3, 1.75], FS)) for b in (0.3, 0.6, 0.85)]
    assert drr[0] > drr[1] > drr[2]


CMA = np.array([[4.0 + 0.0289, 3.0, 1.75], [4.0 - 0.0144, 3.025, 1.75], [4.0 - 0.0144, 2.975, 1.75]])


def test_calibration_hits_target():
    room, rep = calibrate_reflection(ROOM, CMA, [2, 3, 1.75], -1.4)
    assert rep.achieved_drr_db == pytest.approx(-1.4, abs=0.01)
    assert room.reflection_coefficient == rep.beta
    assert 0.13 <= rep.sabine_t60 <= 0.23
    again, rep2 = calibrate_reflection(ROOM, CMA, [2, 3, 1.75], -1.4)
    assert rep2.beta == rep.beta


def test_calibration_unreachable():
    with pytest.raises(CalibrationError):
        calibrate_reflection(ROOM, CMA, [2, 3, 1.75], -20.0, beta_max=0.5)


def test_fibonacci_sphere_is_balanced():
    u = fibonacci_sphere(1024)
    np.testing.assert_allclose(np.linalg.norm(u, axis=1), 1.0)
    np.testing.assert_allclose(u.mean(axis=0), 0.0, atol=2e-3)


def test_noise_coherence_short_run():
    mics = np.array([[0.0, 0, 0], [0.05, 0, 0]])
    x = isotropic_noise(8.0, FS, mics, num_plane_waves=256, seed=1)
    f, pxy = csd(x[0], x[1], FS, nperseg=512)
    _, pxx = welch(x[0], FS, nperseg=512)
    _, pyy = welch(x[1], FS, nperseg=512)
    coh = np.real(pxy) / np.sqrt(pxx * pyy)
    band = f <= 4000
    ref = np.sinc(2 * f * 0.05 / 343.0)
    assert np.mean(np.abs(coh[band] - ref[band])) < 0.08
    assert np.var(x[0]) == pytest.approx(1.0, rel=0.1)


def test_noise_deterministic_per_seed():
    mics = np.array([[0.0, 0, 0], [0.05, 0, 0], [1.0, 2.0, 0.0]])
    a = isotropic_noise(0.5, FS, mics, 128, seed=3)
    b = isotropic_noise(0.5, FS, mics, 128, seed=3)
    c = isotropic_noise(0.5, FS, mics, 128, seed=4)
    np.testing.assert_array_equal(a, b)
    assert not np.allclose(a, c)
    with pytest.raises(ValueError):
        isotropic_noise(0.5, FS, mics, 10)


def test_single_mic_noise_is_flat():
    x = isotropic_noise(10.0, FS, np.zeros((1, 3)), 128, seed=2)[0]
    f, p = welch(x, FS, nperseg=512)
    band = (f > 200) & (f < 7800)
    slope = np.polyfit(np.log2(f[band]), 10 * np.log10(p[band]), 1)[0]
    assert abs(slope) < 0.5


def test_spectral_gain_colours_noise():
    g = lambda f: np.where(f < 2000, 1.0, 0.1)
    x = isotropic_noise(4.0, FS, np.zeros((1, 3)), 128, seed=0, spectral_gain=g)[0]
    f, p = welch(x, FS, nperseg=512)
    assert 10 * np.log10(p[f < 1800].mean() / p[f > 2200].mean()) == pytest.approx(20, abs=1.5)


def test_speech_slope_and_activity():
    s = synth_speech(3.0, FS, seed=11)
    assert len(s.samples) == 48000 and s.kind and s.seed == 11
    f, p = welch(s.samples, FS, nperseg=1024)
    band = (f >= 500) & (f <= 4000)
    slope = np.polyfit(np.log2(f[band]), 10 * np.log10(p[band]), 1)[0]
    assert -10.0 <= slope <= -4.0
    frame = int(0.02 * FS)
    e = np.array([np.sum(s.samples[i:i + frame] ** 2) for i in range(0, len(s.samples) - frame, frame)])
    active = np.mean(e > 1e-3 * e.max())
    assert 0.55 <= active <= 0.85
    np.testing.assert_array_equal(s.samples, synth_speech(3.0, FS, seed=11).samples)
    with pytest.raises(ValueError):
        SourceSignal(np.zeros(10), FS)


def test_long_term_spectrum_unit_mean_power():
    s = synth_speech(3.0, FS, seed=2).samples
    gain = long_term_spectrum(s, FS)
    f = np.linspace(0, 8000, 257)
    assert np.mean(gain(f) ** 2) == pytest.approx(1.0, rel=0.02)
    assert gain(np.array([300.0]))[0] > gain(np.array([6000.0]))[0]


@settings(max_examples=10, deadline=None)
@given(st.lists(st.floats(-0.99, 0.99), min_size=4, max_size=50))
def test_wav_roundtrip(vals):
    import tempfile
    from pathlib import Path
    x = np.array([vals, vals[::-1]])
    with tempfile.TemporaryDirectory() as d:
        p = write_wav(Path(d) / "a.wav", x, 16000)
        y, fs = read_wav(p)
        assert fs == 16000
        np.testing.assert_allclose(y, x, atol=1e-7)
        write_wav(Path(d) / "b.wav", x, 16000, fmt="pcm16")
        y16, _ = read_wav(Path(d) / "b.wav")
        np.testing.assert_allclose(y16, x, atol=1.0 / 32767)


@pytest.fixture(scope="module")
def calibrated_room():
    cfg = SceneConfig()
    room, _ = calibrate_reflection(ROOM, cfg.geometry().mic_positions, cfg.source, -1.4)
    return room


def test_render_stems_and_levels(calibrated_room):
    cfg = SceneConfig(aux_positions=[(1.0, 1.0, 1.75)], num_plane_waves=128, drr_db=-1.4, rsnr_db=3.0)
    src = synth_speech(1.0, FS, seed=0)
    sc = render_scenario(cfg, src, calibrated_room, seed=5)
    assert sc.mixed.shape == (4, 16000)
    assert sc.aux_channels == [3]
    np.testing.assert_allclose(sc.mixed, sc.direct + sc.reverb + sc.noise)
    assert sc.rsnr_db == pytest.approx(3.0, abs=1e-9)
    assert sc.rir_drr_db == pytest.approx(-1.4, abs=0.02)
    assert sc.dc == pytest.approx(2.0)
    assert sc.doa.degrees == pytest.approx(180.0)
    again = render_scenario(cfg, src, calibrated_room, seed=5, rir_cache=RirCache())
    np.testing.assert_array_equal(again.mixed, sc.mixed)


def test_render_anechoic_without_noise():
    cfg = SceneConfig(drr_db=None, rsnr_db=None)
    sc = render_scenario(cfg, synth_speech(0.5, FS, seed=1), ROOM, seed=0)
    assert not np.any(sc.reverb) and not np.any(sc.noise)
    assert sc.drr_db == math.inf
    with pytest.raises(ValueError):
        render_scenario(SceneConfig(rsnr_db=0.0), synth_speech(0.5, FS), ROOM, seed=0)
