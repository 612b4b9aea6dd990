"""Geometry, constants and the free-field signal model.

All positions are 3D (meters); direction-of-arrival vectors live in the x-y
plane, ``v = [cos(theta), sin(theta), 0]``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from itertools import combinations
from typing import Optional, Sequence, Union

import numpy as np

TWO_PI = 2.0 * math.pi


class GeometryError(ValueError):
    """Degenerate or invalid geometry (coincident points, bad indices...)."""


@dataclass(frozen=True)
class AcousticConstants:
    speed_of_sound: float = 343.0
    point_source_attenuation: float = field(default=4.0 * math.pi, init=False)

    def __post_init__(self):
        if not (self.speed_of_sound > 0 and math.isfinite(self.speed_of_sound)):
            raise ValueError(f"speed_of_sound must be positive, got {self.speed_of_sound}")

    @property
    def xi(self) -> float:
        return self.point_source_attenuation


DEFAULT_CONSTANTS = AcousticConstants()


def as_position(p) -> np.ndarray:
    """Coerce ``p`` to a finite float array of shape (3,). 2D input gets z = 0."""
    arr = np.asarray(p, dtype=float).reshape(-1)
    if arr.size == 2:
        arr = np.append(arr, 0.0)
    if arr.size != 3:
        raise GeometryError(f"position must have 2 or 3 components, got {arr.size}")
    if not np.all(np.isfinite(arr)):
        raise GeometryError(f"position has non-finite components: {arr}")
    return arr


def wrap_angle(theta: float) -> float:
    """Map an angle in radians onto [0, 2*pi)."""
    t = math.fmod(theta, TWO_PI)
    if t < 0:
        t += TWO_PI
    # fmod of values like -1e-17 lands exactly on 2*pi after the shift
    return 0.0 if t >= TWO_PI else t


@dataclass(frozen=True)
class DoaVector:
    """Azimuthal direction of arrival, stored as an angle in [0, 2*pi)."""

    azimuth: float

    def __post_init__(self):
        if not math.isfinite(self.azimuth):
            raise ValueError("azimuth must be finite")
        object.__setattr__(self, "azimuth", wrap_angle(float(self.azimuth)))

    @classmethod
    def from_degrees(cls, deg: float) -> "DoaVector":
        return cls(math.radians(deg))

    @classmethod
    def from_vector(cls, v) -> "DoaVector":
        v = np.asarray(v, dtype=float)
        if np.hypot(v[0], v[1]) == 0:
            raise ValueError("cannot take the azimuth of a vector with no x-y component")
        return cls(math.atan2(v[1], v[0]))

    @property
    def degrees(self) -> float:
        return math.degrees(self.azimuth)

    @property
    def vector(self) -> np.ndarray:
        return np.array([math.cos(self.azimuth), math.sin(self.azimuth), 0.0])


def unit_vectors(azimuths) -> np.ndarray:
    """Stack of DOA unit vectors, shape (n, 3), for an array of azimuths (radians)."""
    az = np.asarray(azimuths, dtype=float)
    return np.stack([np.cos(az), np.sin(az), np.zeros_like(az)], axis=-1)


@dataclass
class ArrayGeometry:
    """Compact array microphones plus an optional auxiliary microphone.

    ``mic_positions`` has shape (M, 3), M >= 2.
    """

    mic_positions: np.ndarray
    aux_position: Optional[np.ndarray] = None

    def __post_init__(self):
        mics = np.asarray(self.mic_positions, dtype=float)
        if mics.ndim != 2:
            raise GeometryError("mic_positions must be a 2D array (M, 2|3)")
        mics = np.stack([as_position(m) for m in mics])
        if mics.shape[0] < 2:
            raise GeometryError(f"need at least 2 array microphones, got {mics.shape[0]}")
        for i, j in combinations(range(len(mics)), 2):
            if np.linalg.norm(mics[i] - mics[j]) <= 0:
                raise GeometryError(f"microphones {i} and {j} coincide")
        self.mic_positions = mics
        if self.aux_position is not None:
            aux = as_position(self.aux_position)
            d = np.linalg.norm(mics - aux, axis=1)
            if np.any(d <= 0):
                raise GeometryError(f"auxiliary microphone coincides with mic {int(np.argmin(d))}")
            self.aux_position = aux

    @property
    def num_mics(self) -> int:
        return self.mic_positions.shape[0]

    @property
    def centroid(self) -> np.ndarray:
        return self.mic_positions.mean(axis=0)

    def pairs(self) -> list[tuple[int, int]]:
        """All CMA index pairs (i, j) with i > j, in a fixed order."""
        return [(i, j) for i in range(self.num_mics) for j in range(i)]

    def distance(self, i: int, j: int) -> float:
        self._check_index(i)
        self._check_index(j)
        return float(np.linalg.norm(self.mic_positions[i] - self.mic_positions[j]))

    def aux_distance(self, i: int) -> float:
        if self.aux_position is None:
            raise GeometryError("no auxiliary microphone configured")
        self._check_index(i)
        return float(np.linalg.norm(self.aux_position - self.mic_positions[i]))

    def with_aux(self, aux_position) -> "ArrayGeometry":
        return ArrayGeometry(self.mic_positions.copy(), aux_position)

    def rotated(self, angle: float) -> "ArrayGeometry":
        """Rotate the array microphones about the centroid in the x-y plane."""
        c, s = math.cos(angle), math.sin(angle)
        rot = np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])
        mc = self.centroid
        mics = (self.mic_positions - mc) @ rot.T + mc
        return ArrayGeometry(mics, self.aux_position)

    def _check_index(self, i: int):
        if not (0 <= i < self.num_mics):
            raise IndexError(f"microphone index {i} out of range for M = {self.num_mics}")

    @classmethod
    def triangle(cls, centroid, side: float = 0.05, orientation: float = 0.0,
                 aux_position=None) -> "ArrayGeometry":
        """Equilateral triangle of the given side length around ``centroid``.

        The first microphone sits at azimuth ``orientation`` (radians) from the
        centroid; the others follow at +120 and +240 degrees.
        """
        mc = as_position(centroid)
        r = side / math.sqrt(3.0)
        az = orientation + np.array([0.0, 2.0, 4.0]) * math.pi / 3.0
        mics = mc + r * unit_vectors(az)
        return cls(mics, aux_position)

    @classmethod
    def pair(cls, centroid, spacing: float = 0.05, orientation: float = 0.0,
             aux_position=None) -> "ArrayGeometry":
        """Two microphones ``spacing`` apart along azimuth ``orientation``."""
        mc = as_position(centroid)
        u = unit_vectors(orientation) * spacing / 2.0
        return cls(np.stack([mc + u, mc - u]), aux_position)


def tdoa(geometry: ArrayGeometry, i: int, j: int, v: Union[DoaVector, np.ndarray],
         c: AcousticConstants = DEFAULT_CONSTANTS) -> float:
    """Far-field TDOA ``tau_ij(v) = -v.(m_i - m_j) / c`` in seconds."""
    geometry._check_index(i)
    geometry._check_index(j)
    if i == j:
        raise ValueError("tdoa requires two distinct microphones")
    vec = v.vector if isinstance(v, DoaVector) else np.asarray(v, dtype=float)
    diff = geometry.mic_positions[i] - geometry.mic_positions[j]
    return float(-(vec @ diff) / c.speed_of_sound)


def pair_tdoas(geometry: ArrayGeometry, pairs: Sequence[tuple[int, int]], azimuths,
               c: AcousticConstants = DEFAULT_CONSTANTS) -> np.ndarray:
    """Vectorised far-field TDOAs, shape (len(pairs), len(azimuths))."""
    v = unit_vectors(np.atleast_1d(azimuths))
    m = geometry.mic_positions
    diffs = np.stack([m[i] - m[j] for i, j in pairs])
    return -(diffs @ v.T) / c.speed_of_sound


def direct_path_transfer(source, mic, omega, c: AcousticConstants = DEFAULT_CONSTANTS):
    """Free-field point-source transfer ``exp(-j omega d / c) / (xi d)``.

    ``omega`` may be a scalar or an array (rad/s).
    """
    d = float(np.linalg.norm(as_position(source) - as_position(mic)))
    if d <= 0:
        raise GeometryError("source and microphone coincide")
    omega = np.asarray(omega, dtype=float)
    gain = np.exp(-1j * omega * d / c.speed_of_sound) / (c.xi * d)
    return complex(gain) if gain.ndim == 0 else gain


def doa_error(v_hat, v_true) -> float:
    """Angle in degrees between two direction vectors (or DoaVectors)."""
    a = v_hat.vector if isinstance(v_hat, DoaVector) else np.asarray(v_hat, dtype=float)
    b = v_true.vector if isinstance(v_true, DoaVector) else np.asarray(v_true, dtype=float)
    na, nb = np.linalg.norm(a), np.linalg.norm(b)
    if na == 0 or nb == 0:
        raise ValueError("doa_error is undefined for zero vectors")
    # atan2 form of acos(a.b / |a||b|): well conditioned near 0 and 180 degrees
    a, b = a / na, b / nb
    return math.degrees(math.atan2(float(np.linalg.norm(np.cross(a, b))), float(a @ b)))
