"""Output-directory plumbing: lockfile, metadata text file, CSV writing."""

from __future__ import annotations

import csv
import os
import platform
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
import scipy
import yaml

LOCK_NAME = ".auxsrp.lock"
METADATA_NAME = "run_metadata.txt"


class OutputError(OSError):
    """Output directory cannot be used (locked, unwritable...)."""


class RunLock:
    """Exclusive ownership of an output directory for the duration of a run."""

    def __init__(self, out_dir: Path):
        self.path = Path(out_dir) / LOCK_NAME
        self._fd = None

    def __enter__(self):
        try:
            self._fd = os.open(self.path, os.O_CREAT | os.O_EXCL | os.O_WRONLY)
        except FileExistsError:
            raise OutputError(f"{self.path.parent} is in use by another run (remove {self.path} "
                              "if that run is dead)") from None
        os.write(self._fd, f"{os.getpid()}\n".encode())
        return self

    def __exit__(self, *exc):
        if self._fd is not None:
            os.close(self._fd)
            self._fd = None
        try:
            self.path.unlink()
        except FileNotFoundError:
            pass
        return False


def prepare_out_dir(out_dir) -> Path:
    p = Path(out_dir)
    try:
        p.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise OutputError(f"cannot create output directory {p}: {exc.strerror}") from exc
    return p


def _plain(obj):
    """Convert numpy scalars/arrays, tuples and paths into YAML-safe builtins."""
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _plain(obj.tolist())
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, Path):
        return str(obj)
    if isinstance(obj, float) and obj != obj:
        return "nan"
    return obj


def write_metadata(out_dir: Path, command: str, seed: int, config: dict, results: dict) -> Path:
    """Human-readable run record: resolved config plus achieved calibration values.

    No timestamps or host names, so identical runs produce identical files.
    """
    from auxsrp import __version__
    doc = {
        "command": command,
        "seed": seed,
        "versions": {"auxsrp": __version__, "numpy": np.__version__, "scipy": scipy.__version__,
                     "python": platform.python_version()},
        "config": _plain(config),
        "results": _plain(results),
    }
    path = Path(out_dir) / METADATA_NAME
    path.write_text(yaml.safe_dump(doc, sort_keys=True, default_flow_style=None, width=100))
    return path


def fmt(v, digits: int = 12) -> str:
    """Fixed, platform-independent number formatting for CSV cells."""
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        v = float(v)
        if v != v:
            return "nan"
        if v in (float("inf"), float("-inf")):
            return "inf" if v > 0 else "-inf"
        s = f"{v:.{digits}f}"
        return "0." + "0" * digits if s == "-0." + "0" * digits else s
    return str(v)


def write_csv(path: Path, header: Sequence[str], rows: Iterable[Sequence], digits: int = 12) -> Path:
    path = Path(path)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([fmt(v, digits) for v in r])
    return path
