"""Command line entry point: ``cfgenergy {run,sweep,metrics,plot,report}``.

Exit codes: 0 success, 1 partial failure (some runs failed), 2 config error.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import sys
from pathlib import Path
from typing import Optional, Sequence

from .config import ConfigError, SweepConfig, parse_config
from .energy import EmptyInputError
from .metrics import aggregate_report, energy_metrics
from .plotting import GROUP_BY, emit_plots
from .report import SCORE_FIELDS, summary_table
from .runio import (
    CONFIG_FILE,
    TRAJECTORY_FILE,
    SchemaError,
    list_run_dirs,
    read_runs,
    read_trajectory,
    write_metrics,
    write_run,
)
from .sweep import execute_run, run_configs, run_sweep

log = logging.getLogger("cfgenergy")

EXIT_OK, EXIT_PARTIAL, EXIT_CONFIG = 0, 1, 2


def _load(args) -> SweepConfig:
    config = parse_config(args.config)
    changes = {}
    if getattr(args, "seed_override", None) is not None:
        changes["seeds"] = (args.seed_override,)
    if getattr(args, "out", None) is not None:
        changes["output_dir"] = Path(args.out)
    return dataclasses.replace(config, **changes) if changes else config


def cmd_run(args) -> int:
    config = _load(args)
    configs = run_configs(config)
    if not 0 <= args.index < len(configs):
        raise ConfigError(f"--index {args.index} outside grid of {len(configs)} runs")
    artifacts = execute_run(configs[args.index])
    run_dir = write_run(artifacts, config.output_dir)
    e = artifacts.record.energies
    s = artifacts.scores
    print(f"{run_dir}")
    print(f"energy: start {e[0]:.4f}  max {e.max():.4f}  final {e[-1]:.4f}")
    print(f"S_stab {s.stab:.4f}  S_cons {s.cons:.4f}  S_eff {s.eff:.4f}  S_conv {s.conv:.4f}")
    return EXIT_OK


def cmd_sweep(args) -> int:
    config = _load(args)
    print(f"sweeping {config.grid_size} runs into {config.output_dir}", file=sys.stderr)
    result = run_sweep(config, workers=args.workers)
    if result.artifacts:
        report = aggregate_report((a.key, a.scores) for a in result.artifacts)
        print(summary_table(report).text)
    if result.failures:
        print(f"{len(result.failures)} of {config.grid_size} runs failed", file=sys.stderr)
        return EXIT_PARTIAL
    return EXIT_OK


def cmd_metrics(args) -> int:
    dirs = list_run_dirs(args.out)
    if not dirs:
        raise EmptyInputError(f"no run directories under {args.out}")
    for d in dirs:
        config = json.loads((d / CONFIG_FILE).read_text(encoding="utf-8"))
        skip = config.get("skip_initial", False) if args.skip_initial is None else args.skip_initial
        energies = [e.energy for e in read_trajectory(d / TRAJECTORY_FILE)]
        write_metrics(d, energy_metrics(energies, skip_initial=skip), skip)
    print(f"recomputed metrics for {len(dirs)} runs", file=sys.stderr)
    return EXIT_OK


def cmd_plot(args) -> int:
    runs = read_runs(args.out)
    plot_dir = Path(args.plot_dir) if args.plot_dir else Path(args.out) / "plots"
    for p in emit_plots(runs, args.group_by, plot_dir):
        print(p)
    return EXIT_OK


def cmd_report(args) -> int:
    runs = read_runs(args.out)
    if not runs:
        raise EmptyInputError(f"no run directories under {args.out}")
    table = summary_table(aggregate_report((a.key, a.scores) for a in runs), score=args.score)
    out = Path(args.out)
    (out / f"summary_{args.score}.csv").write_text(table.csv, encoding="utf-8")
    (out / "summary_long.csv").write_text(table.long_csv, encoding="utf-8")
    print(table.text)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="cfgenergy", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def with_config(sp):
        sp.add_argument("--config", required=True, help="TOML sweep config")
        sp.add_argument("--out", help="output directory (overrides output_dir)")
        sp.add_argument("--seed-override", type=int, help="replace the seed list with this single seed")

    sp = sub.add_parser("run", help="execute one grid point of a config")
    with_config(sp)
    sp.add_argument("--index", type=int, default=0, help="grid point to run (default 0)")
    sp.set_defaults(func=cmd_run)

    sp = sub.add_parser("sweep", help="execute the full grid of a config")
    with_config(sp)
    sp.add_argument("--workers", type=int, default=1)
    sp.set_defaults(func=cmd_sweep)

    sp = sub.add_parser("metrics", help="recompute metrics.json from stored trajectories")
    sp.add_argument("--out", required=True)
    skip = sp.add_mutually_exclusive_group()
    skip.add_argument("--skip-initial", dest="skip_initial", action="store_true", default=None)
    skip.add_argument("--include-initial", dest="skip_initial", action="store_false")
    sp.set_defaults(func=cmd_metrics)

    sp = sub.add_parser("plot", help="write SVG energy plots")
    sp.add_argument("--out", required=True)
    sp.add_argument("--group-by", choices=GROUP_BY, default="scale")
    sp.add_argument("--plot-dir", help="defaults to OUT/plots")
    sp.set_defaults(func=cmd_plot)

    sp = sub.add_parser("report", help="print and save the sampler x scale summary table")
    sp.add_argument("--out", required=True)
    sp.add_argument("--score", choices=SCORE_FIELDS, default="stab")
    sp.set_defaults(func=cmd_report)
    return p


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG if getattr(args, "config", None) else EXIT_PARTIAL
    except (SchemaError, EmptyInputError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_PARTIAL


if __name__ == "__main__":
    sys.exit(main())
