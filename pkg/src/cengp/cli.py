"""Command-line entry point for censorship-grid experiments.

Exit codes: 0 on success, 2 for configuration or parse problems, 3 when
every grid cell failed.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import pandas as pd

from .experiment import (ConfigError, ExperimentConfig, emit_results,
                         run_experiment_grid)
from .io import ParseError
from .plots import render_figures

log = logging.getLogger("cengp")

LOG_LEVELS = {"error": logging.ERROR, "warn": logging.WARNING,
              "info": logging.INFO, "debug": logging.DEBUG}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="cengp",
        description="Run censored-demand GP experiments over a censorship grid.")
    parser.add_argument("--config", required=True, metavar="PATH",
                        help="JSON experiment configuration")
    parser.add_argument("--out", default="results", metavar="DIR",
                        help="output directory (default: ./results)")
    parser.add_argument("--seed", type=int, default=None,
                        help="override the config base seed")
    parser.add_argument("--models", default=None,
                        help="comma-separated subset of ncgp,ncgp_a,cgp")
    parser.add_argument("--repeats", type=int, default=None,
                        help="override the config repeat count")
    parser.add_argument("--log-level", choices=sorted(LOG_LEVELS),
                        default="warn")
    parser.add_argument("--no-plots", action="store_true",
                        help="skip figure rendering")
    return parser


def _apply_overrides(config: ExperimentConfig, args) -> ExperimentConfig:
    if args.seed is not None:
        config.seed = int(args.seed)
    if args.repeats is not None:
        if args.repeats < 1:
            raise ConfigError("repeats must be >= 1")
        config.repeats = int(args.repeats)
    if args.models is not None:
        models = tuple(m.strip() for m in args.models.split(",") if m.strip())
        bad = [m for m in models if m not in ("ncgp", "ncgp_a", "cgp")]
        if bad or not models:
            raise ConfigError(f"unknown models in --models: {bad or args.models}")
        config.models = models
    return config


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=LOG_LEVELS[args.log_level],
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        config = _apply_overrides(ExperimentConfig.from_file(args.config), args)
        records, curves = run_experiment_grid(config)
    except (ConfigError, ParseError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    outdir = Path(args.out)
    files = emit_results(records, outdir, curves=curves, timings=config.timings)
    if not args.no_plots:
        summary = pd.read_csv(files[1])
        files.extend(render_figures(outdir, summary, curves))
    for path in files:
        log.info("wrote %s", path)
    if all(r.error for r in records):
        print("error: every grid cell failed; see results.csv", file=sys.stderr)
        return 3
    return 0


if __name__ == "__main__":
    sys.exit(main())
