"""Conventional and auxiliary-microphone SRP-PHAT, and grid-search DOA estimation."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from auxsrp.core import (DEFAULT_CONSTANTS, AcousticConstants, ArrayGeometry, DoaVector,
                         pair_tdoas)
from auxsrp.spectral import (CrossSpectrumSet, StftConfig, phat_weight, recursive_cross_psd,
                             stft)

CONVENTIONAL = "conventional"
AUXILIARY = "auxiliary"


class SrpError(ValueError):
    pass


@dataclass
class SrpSpectra:
    """Time-averaged PHAT spectra for every CMA pair (i > j).

    ``values`` has shape (pairs, bins); ``bin_frequencies`` in rad/s.
    """

    mode: str
    pairs: list[tuple[int, int]]
    values: np.ndarray
    bin_frequencies: np.ndarray


@dataclass
class SrpGrid:
    azimuths: np.ndarray
    values: np.ndarray

    @property
    def argmax_index(self) -> int:
        # np.argmax returns the first maximum: ties go to the smallest azimuth
        return int(np.argmax(self.values))


def cma_pairs(num_mics: int) -> list[tuple[int, int]]:
    return [(i, j) for i in range(num_mics) for j in range(i)]


def azimuth_grid(resolution_deg: float = 1.0) -> np.ndarray:
    """Uniform azimuth grid covering [0, 360) degrees, returned in radians."""
    n = int(round(360.0 / resolution_deg))
    if n < 1 or not math.isclose(n * resolution_deg, 360.0, rel_tol=1e-9):
        raise SrpError(f"resolution {resolution_deg} deg does not divide 360")
    return np.deg2rad(np.arange(n) * resolution_deg)


def _frame_mean(values: np.ndarray) -> np.ndarray:
    return values.mean(axis=1) if values.ndim == 3 else values


def conventional_spectra(cs: CrossSpectrumSet, num_mics: int) -> SrpSpectra:
    """Frame-averaged PHAT spectra between the CMA microphones.

    ``cs`` must hold PHAT-weighted spectra for every pair (i, j), i > j, of the
    first ``num_mics`` channels (either orientation of a pair is accepted).
    """
    pairs = cma_pairs(num_mics)
    rows = []
    for i, j in pairs:
        try:
            rows.append(cs.get(i, j))
        except KeyError:
            raise SrpError(f"cross-spectrum for CMA pair {(i, j)} missing") from None
    values = _frame_mean(np.stack(rows))
    return SrpSpectra(CONVENTIONAL, pairs, values, _freqs(cs, values))


def auxiliary_spectra(cs_aux: CrossSpectrumSet, num_mics: int,
                      aux_channel: Optional[int] = None) -> SrpSpectra:
    """CMA pair spectra rebuilt through the auxiliary microphone.

    For every pair i > j the per-frame product ``psi_iA * psi_Aj`` with
    ``psi_Aj = conj(psi_jA)`` is formed, then averaged over frames.
    """
    if aux_channel is None:
        raise SrpError("no auxiliary channel configured")
    pairs = cma_pairs(num_mics)
    try:
        links = {i: cs_aux.get(i, aux_channel) for i in range(num_mics)}
    except KeyError as exc:
        raise SrpError(f"cross-spectrum with the auxiliary channel missing: {exc}") from None
    prods = np.stack([links[i] * np.conj(links[j]) for i, j in pairs])
    values = _frame_mean(prods)
    return SrpSpectra(AUXILIARY, pairs, values, _freqs(cs_aux, values))


def _freqs(cs: CrossSpectrumSet, values: np.ndarray) -> np.ndarray:
    if cs.bin_frequencies is not None:
        return np.asarray(cs.bin_frequencies)
    raise SrpError("cross-spectrum set carries no bin frequencies")


def default_band(num_bins: int) -> tuple[int, int]:
    """Bins 1..K-1 inclusive: DC excluded, Nyquist included."""
    return 1, num_bins - 1


def srp_function(spectra: SrpSpectra, geometry: ArrayGeometry, azimuths=None,
                 band: Optional[tuple[int, int]] = None,
                 c: AcousticConstants = DEFAULT_CONSTANTS) -> SrpGrid:
    """Steered response power on an azimuth grid.

    ``phi(theta) = sum_pairs sum_{k in band} 2 Re{psi_ij[k] exp(j w_k tau_ij(theta))}``,
    the positive-frequency form of the integral over all frequencies.
    ``band`` is an inclusive bin range.
    """
    if azimuths is None:
        azimuths = azimuth_grid(1.0)
    azimuths = np.asarray(azimuths, dtype=float)
    K = spectra.values.shape[-1]
    lo, hi = band if band is not None else default_band(K)
    if lo < 0 or hi > K - 1:
        raise SrpError(f"band {(lo, hi)} outside bins 0..{K - 1}")
    if hi < lo:
        raise SrpError(f"empty band {(lo, hi)}")
    w = spectra.bin_frequencies[lo:hi + 1]
    psi = spectra.values[:, lo:hi + 1]
    tau = pair_tdoas(geometry, spectra.pairs, azimuths, c)  # (P, G)
    phi = np.zeros(len(azimuths))
    for p in range(len(spectra.pairs)):
        steer = np.exp(1j * tau[p][:, None] * w[None, :])  # (G, K)
        phi += 2.0 * (steer @ psi[p]).real
    return SrpGrid(azimuths, phi)


def estimate_doa(grid: SrpGrid) -> DoaVector:
    if len(grid.values) == 0:
        raise SrpError("empty SRP grid")
    return DoaVector(float(grid.azimuths[grid.argmax_index]))


def srp_spectra_from_signals(signals: np.ndarray, num_mics: int, mode: str = CONVENTIONAL,
                             aux_channels: Sequence[int] = (),
                             stft_cfg: StftConfig = StftConfig(), smoothing: float = 0.98,
                             floor_eps: float = 1e-12) -> list[SrpSpectra]:
    """Full front end: STFT, recursive cross-PSD, PHAT, frame mean.

    ``signals`` is (channels, samples); channels ``0..num_mics-1`` are the CMA.
    Returns one conventional spectrum set, or one auxiliary set per entry of
    ``aux_channels``.
    """
    spec = stft(signals, stft_cfg)
    if mode == CONVENTIONAL:
        cs = phat_weight(recursive_cross_psd(spec, cma_pairs(num_mics), smoothing), floor_eps)
        return [conventional_spectra(cs, num_mics)]
    if mode != AUXILIARY:
        raise SrpError(f"unknown mode {mode!r}")
    if not aux_channels:
        raise SrpError("no auxiliary channel configured")
    pairs = [(i, a) for a in aux_channels for i in range(num_mics)]
    cs = phat_weight(recursive_cross_psd(spec, pairs, smoothing), floor_eps)
    return [auxiliary_spectra(cs, num_mics, a) for a in aux_channels]


def locate(signals: np.ndarray, geometry: ArrayGeometry, mode: str = CONVENTIONAL,
           aux_channel: Optional[int] = None, resolution_deg: float = 1.0,
           stft_cfg: StftConfig = StftConfig(), smoothing: float = 0.98,
           band: Optional[tuple[int, int]] = None,
           c: AcousticConstants = DEFAULT_CONSTANTS) -> tuple[DoaVector, SrpGrid, SrpSpectra]:
    """Estimate the source azimuth from raw multichannel samples."""
    M = geometry.num_mics
    aux = () if aux_channel is None else (aux_channel,)
    spectra = srp_spectra_from_signals(signals, M, mode, aux, stft_cfg, smoothing)[0]
    grid = srp_function(spectra, geometry, azimuth_grid(resolution_deg), band, c)
    return estimate_doa(grid), grid, spectra
