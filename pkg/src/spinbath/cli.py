"""Command-line entry point: ``spinbath [options]`` or ``python -m spinbath``.

Exit codes: 0 success, 2 configuration error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .runner import ConfigError, RunConfig, RunManifest, StageError, run_experiment, summarize, write_summary

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERIC = 3

PRESETS = {"paper": {}}


def _float_list(text: str) -> tuple[float, ...]:
    try:
        values = tuple(float(v) for v in text.split(",") if v.strip())
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"not a comma-separated list of numbers: {text!r}") from exc
    if not values:
        raise argparse.ArgumentTypeError("empty list")
    return values


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: config error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="spinbath", description="Central spin in a spin bath: lambda sweep of exact dynamics.")
    p.add_argument("--preset", choices=sorted(PRESETS), default="paper", help="base parameter set")
    p.add_argument("--from-manifest", metavar="PATH", help="reuse the configuration stored in a manifest")
    p.add_argument("--ns", type=int, dest="n_s", help="number of bath spins")
    p.add_argument("--neig", type=int, dest="n_eig", help="bath eigenstates in the thermal ensemble")
    p.add_argument("--kt", type=float, dest="kT", help="temperature kT")
    p.add_argument("--omega0", type=float, help="central spin splitting")
    p.add_argument("--beta", type=float, help="transverse field on every spin")
    p.add_argument("--lambda0", type=float, help="central spin to bath coupling")
    p.add_argument("--omega-d", type=float, dest="omega_d", help="Debye cutoff frequency")
    p.add_argument("--lambdas", type=_float_list, help="comma-separated bath couplings, e.g. 0,1,2,4,8")
    p.add_argument("--tmax", type=float, dest="t_max", help="final time")
    p.add_argument("--dt-out", type=float, dest="dt_out", help="output spacing")
    p.add_argument("--rtol", type=float, help="integrator relative tolerance")
    p.add_argument("--atol", type=float, help="integrator absolute tolerance")
    p.add_argument("--freq-mode", dest="freq_mode", help="quantile | random:SEED | file:PATH")
    p.add_argument("--seed", type=int, dest="lanczos_seed", help="Lanczos start-vector seed")
    p.add_argument("--out", dest="out_dir", help="output directory")
    p.add_argument(
        "--isolated-ref",
        dest="isolated_reference",
        action=argparse.BooleanOptionalAction,
        default=None,
        help="also evolve the uncoupled central spin (default on)",
    )
    p.add_argument("--threads", type=int, help="worker processes over the lambda list")
    p.add_argument("--summarize", metavar="DIR", help="only rebuild summary.csv for a finished run")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


_CONFIG_KEYS = (
    "n_s", "n_eig", "kT", "omega0", "beta", "lambda0", "omega_d", "lambdas", "t_max", "dt_out",
    "rtol", "atol", "freq_mode", "lanczos_seed", "out_dir", "isolated_reference", "threads",
)  # fmt: skip


def config_from_args(args: argparse.Namespace) -> RunConfig:
    if args.from_manifest:
        base = RunConfig.from_dict(RunManifest.load(args.from_manifest).config)
    else:
        base = RunConfig.paper(**PRESETS[args.preset])
    changes = {k: getattr(args, k) for k in _CONFIG_KEYS if getattr(args, k) is not None}
    return base.replace(**changes)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(asctime)s %(levelname)s %(message)s",
        stream=sys.stderr,
    )
    if args.summarize:
        try:
            rows = summarize(args.summarize)
        except (OSError, ValueError) as exc:
            print(f"spinbath: summarize: {exc}", file=sys.stderr)
            return EXIT_CONFIG
        write_summary(Path(args.summarize) / "summary.csv", rows)
        print(json.dumps(rows, indent=2))
        return EXIT_OK

    try:
        cfg = config_from_args(args)
        cfg.frequencies()
    except (ConfigError, ValueError, TypeError, OSError) as exc:
        print(f"spinbath: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG

    try:
        manifest = run_experiment(cfg)
    except StageError as exc:
        print(f"spinbath: numerical failure in stage {exc.stage}: {exc.cause}", file=sys.stderr)
        return EXIT_NUMERIC
    for row in manifest.summary:
        print(
            f"lambda={row['lambda']:g}  S_late={row['S_late_mean']:.6f}  "
            f"rms dX={row['rms_dX']:.4f} dY={row['rms_dY']:.4f} dZ={row['rms_dZ']:.4f}"
        )
    print(f"outputs written to {cfg.out_dir}")
    return EXIT_OK


if __name__ == "__main__":
    raise SystemExit(main())
