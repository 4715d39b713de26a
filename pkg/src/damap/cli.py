"""Batch command-line interface.

Subcommands:
  run       execute one configured experiment
  sweep     one run per multiplier / power target, collected into sweep.csv
  validate  Monte-Carlo re-validation of a stored mapping
  dump      re-emit CSV and figures from a stored mapping

Exit codes: 0 on success, 2 for configuration errors, 3 for numeric aborts
(a diagnostics file is written next to the outputs when possible).
"""

from __future__ import annotations

import argparse
import sys
import traceback
from pathlib import Path

from . import plots, reportio, runner
from .config import load_config
from .errors import ConfigurationError, NumericAbortError
from .montecarlo import monte_carlo_validate


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="damap",
        description="Design zero-delay analog mappings for two correlated sources "
        "on parallel noisy channels.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_text in (
        ("run", "execute one configured experiment"),
        ("sweep", "run every configured sweep point"),
        ("validate", "Monte-Carlo validation of a stored mapping"),
        ("dump", "re-emit CSV and figures from a stored mapping"),
    ):
        cmd = sub.add_parser(name, help=help_text)
        cmd.add_argument("--config", type=Path, default=None, help="configuration file (INI)")
        cmd.add_argument(
            "--set",
            dest="overrides",
            action="append",
            default=[],
            metavar="SECTION.KEY=VALUE",
            help="override one configuration value (repeatable)",
        )
        cmd.add_argument("--out", type=Path, default=None, help="output directory")
        cmd.add_argument("--seed", type=int, default=None, help="random seed")
        cmd.add_argument("--method", choices=("da", "greedy", "ncr"), default=None)
        if name in ("validate", "dump"):
            cmd.add_argument("--mapping", type=Path, required=True, help="mapping.json to load")
        if name == "validate":
            cmd.add_argument("--samples", type=int, default=None, help="Monte-Carlo sample count")
    return parser


def _config_from(args) -> "ExperimentConfig":
    overrides = list(args.overrides)
    if args.seed is not None:
        overrides.append(f"run.seed={args.seed}")
    if args.method is not None:
        overrides.append(f"method.name={args.method}")
    if args.out is not None:
        overrides.append(f"run.out_dir={args.out}")
    return load_config(args.config, overrides)


def _cmd_run(args) -> int:
    config = _config_from(args)
    result = runner.run(config)
    print(
        f"method={result.method} D={result.distortion:.6g} "
        f"P1={result.power1:.6g} P2={result.power2:.6g} J={result.lagrangian:.6g} "
        f"SNR={result.snr_db:.2f}dB CSNR={result.csnr_db:.2f}dB"
    )
    return 0


def _cmd_sweep(args) -> int:
    config = _config_from(args)
    rows = runner.sweep(config)
    for row in rows:
        print(
            f"lambda=({row['lambda1']:.4g},{row['lambda2']:.4g}) "
            f"P={row['P1'] + row['P2']:.4g} SNR={row['SNR_dB']:.2f}dB "
            f"CSNR={row['CSNR_dB']:.2f}dB converged={row['converged']}"
        )
    return 0


def _cmd_validate(args) -> int:
    config = _config_from(args)
    mapping = reportio.load_mapping(args.mapping)
    samples = args.samples if args.samples is not None else config.get("run", "mc_samples")
    out_dir = Path(args.out) if args.out is not None else Path(config.get("run", "out_dir"))
    mc = monte_carlo_validate(
        mapping["values"][0],
        mapping["values"][1],
        mapping["x_grids"][0],
        mapping["x_grids"][1],
        mapping["decoder"],
        config.get("source", "rho"),
        config.get("source", "var1"),
        config.get("source", "var2"),
        config.get("noise", "var"),
        samples,
        config.get("run", "seed"),
    )
    payload = {
        "mapping": str(args.mapping),
        "D_mc": mc.distortion,
        "stderr": mc.stderr,
        "D_mc_node": mc.distortion_node,
        "stderr_node": mc.stderr_node,
        "P1_mc": mc.power1,
        "P2_mc": mc.power2,
        "n_samples": mc.n_samples,
        "quantization_floor": mc.quantization_floor,
    }
    reportio.write_json(out_dir / "validation.json", payload)
    print(
        f"D_mc={mc.distortion:.6g} (stderr {mc.stderr:.2g}) "
        f"node-referenced D={mc.distortion_node:.6g} (stderr {mc.stderr_node:.2g})"
    )
    return 0


def _cmd_dump(args) -> int:
    config = _config_from(args)
    mapping = reportio.load_mapping(args.mapping)
    out_dir = Path(args.out) if args.out is not None else Path(config.get("run", "out_dir"))
    reportio.write_mapping(out_dir / "mapping.json", out_dir / "mapping.csv", mapping["payload"])
    if config.get("run", "figures"):
        plots.render_mapping(mapping["payload"], out_dir / "mapping.png")
        plots.render_decoder(mapping["payload"], out_dir / "decoder.png")
    print(f"wrote mapping artifacts to {out_dir}")
    return 0


_COMMANDS = {
    "run": _cmd_run,
    "sweep": _cmd_sweep,
    "validate": _cmd_validate,
    "dump": _cmd_dump,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except ConfigurationError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    except NumericAbortError as exc:
        print(f"numeric abort: {exc}", file=sys.stderr)
        out_dir = args.out if args.out is not None else Path("runs/out")
        try:
            reportio.write_json(
                Path(out_dir) / "diagnostics.json",
                {"error": str(exc), "diagnostics": _stringify(exc.diagnostics),
                 "traceback": traceback.format_exc()},
            )
        except OSError:
            pass
        return 3


def _stringify(obj):
    if isinstance(obj, dict):
        return {str(k): _stringify(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_stringify(v) for v in obj]
    if isinstance(obj, (int, float, str, bool)) or obj is None:
        return obj
    return repr(obj)


if __name__ == "__main__":
    sys.exit(main())
