"""Command-line entry point: ``auxsrp {model-sweep,campaign,locate,rir}``.

Exit codes: 0 success, 2 configuration error, 3 calibration failure,
4 I/O error.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from auxsrp.core import GeometryError
from auxsrp.harness.config import ConfigError, apply_overrides, load_yaml, parse
from auxsrp.harness.experiments import (RunContext, run_campaign, run_locate, run_model_sweep,
                                        run_rir)
from auxsrp.harness.runio import RunLock, prepare_out_dir
from auxsrp.sim.ism import RoomError
from auxsrp.sim.scene import CalibrationError
from auxsrp.spectral import SpectralConfigError
from auxsrp.srp import SrpError

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_CALIBRATION = 3
EXIT_IO = 4

log = logging.getLogger("auxsrp")

RUNNERS = {
    "model-sweep": run_model_sweep,
    "campaign": run_campaign,
    "locate": run_locate,
    "rir": run_rir,
}

HELP = {
    "model-sweep": "P_avg maps of the analytic distortion model, one CSV per SUR",
    "campaign": "simulated DOA campaign: conventional vs auxiliary-microphone SRP-PHAT",
    "locate": "estimate the DOA from a multichannel WAV file",
    "rir": "dump (optionally DRR-calibrated) room impulse responses",
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="auxsrp", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name, text in HELP.items():
        p = sub.add_parser(name, help=text, description=text)
        p.add_argument("--config", type=Path, help="YAML config file (defaults apply when omitted)")
        p.add_argument("--seed", type=int, default=0, help="master seed (default 0)")
        p.add_argument("--out-dir", type=Path, default=Path(f"out-{name}"),
                       help="output directory (created if missing)")
        p.add_argument("--threads", type=int, default=1, help="worker threads (default 1)")
        p.add_argument("--dump-stems", action="store_true",
                       help="write per-scenario direct/reverb/noise/mixed WAV stems (campaign)")
        p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
        p.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE",
                       help="override a config entry, e.g. scene.drr_db=-7.2 (repeatable)")
        if name == "locate":
            p.add_argument("--wav", help="input WAV (overrides the config's 'wav')")
            p.add_argument("--mode", choices=["conventional", "auxiliary"],
                           help="overrides the config's 'mode'")
            p.add_argument("--true-azimuth", type=float, help="ground-truth azimuth in degrees")
    return parser


def _load(args) -> object:
    data = load_yaml(args.config) if args.config is not None else {}
    data = apply_overrides(data, args.overrides)
    if args.command == "locate":
        if args.wav is not None:
            data["wav"] = args.wav
        if args.mode is not None:
            data["mode"] = args.mode
        if args.true_azimuth is not None:
            data["true_azimuth_deg"] = args.true_azimuth
    return parse(args.command, data)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.seed < 0:
        print("error: --seed must be non-negative", file=sys.stderr)
        return EXIT_CONFIG
    if args.threads < 1:
        print("error: --threads must be at least 1", file=sys.stderr)
        return EXIT_CONFIG
    try:
        cfg = _load(args)
    except (ConfigError, GeometryError, RoomError, SpectralConfigError, SrpError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"I/O error: cannot read {exc.filename or args.config}: {exc.strerror or exc}",
              file=sys.stderr)
        return EXIT_IO
    ctx = RunContext(args.out_dir, args.seed, args.threads, args.dump_stems)
    try:
        prepare_out_dir(ctx.out_dir)
        with RunLock(ctx.out_dir):
            result = RUNNERS[args.command](cfg, ctx)
    except CalibrationError as exc:
        print(f"calibration failed: {exc}", file=sys.stderr)
        return EXIT_CALIBRATION
    except (ConfigError, GeometryError, RoomError, SpectralConfigError, SrpError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        where = f" ({exc.filename})" if getattr(exc, "filename", None) else ""
        print(f"I/O error{where}: {exc.strerror or exc}", file=sys.stderr)
        return EXIT_IO
    _summarise(args.command, result)
    return EXIT_OK


def _summarise(command: str, result):
    if command == "model-sweep":
        for sur, r in result.crossings.items():
            print(f"SUR {sur:+.1f} dB: P_avg crossing at {r:.3f} m")
    elif command == "campaign":
        print(f"baseline mean error: {result.baseline_mean:.2f} deg over {len(result.scenarios)} scenarios")
        if result.aux_positions:
            print(f"aux positions improving on the baseline: {int((~result.did_not_reduce).sum())}"
                  f"/{len(result.aux_positions)}")
    elif command == "locate":
        sys.stdout.write(result.text)
    elif command == "rir":
        print(f"reflection coefficient {result.reflection_coefficient:.4f}, "
              f"Sabine T60 {result.sabine_t60:.3f} s, DRR "
              + ", ".join(f"{d:.2f}" for d in result.drr_db) + " dB")


if __name__ == "__main__":
    sys.exit(main())
