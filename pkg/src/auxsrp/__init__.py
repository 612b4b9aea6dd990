"""Auxiliary-microphone SRP-PHAT direction-of-arrival estimation.

Subpackages and modules:

- :mod:`auxsrp.core` -- geometry, constants, TDOA and the free-field signal model
- :mod:`auxsrp.spectral` -- STFT, recursively averaged cross-PSDs, PHAT weighting
- :mod:`auxsrp.srp` -- conventional / auxiliary SRP-PHAT spectra and grid search
- :mod:`auxsrp.model` -- analytic distortion model under a diffuse undesired field
- :mod:`auxsrp.sim` -- image-source rooms, diffuse noise, speech-like sources, scenes
- :mod:`auxsrp.harness` -- experiment orchestration and the ``auxsrp`` CLI
"""

from auxsrp.core import (
    AcousticConstants,
    ArrayGeometry,
    DoaVector,
    GeometryError,
    direct_path_transfer,
    doa_error,
    tdoa,
)

__version__ = "0.1.0"

__all__ = [
    "AcousticConstants",
    "ArrayGeometry",
    "DoaVector",
    "GeometryError",
    "direct_path_transfer",
    "doa_error",
    "tdoa",
]
