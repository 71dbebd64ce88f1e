"""
actiongraphpy.cli
-----------------

Command-line surface.

    actiongraphpy train <config>                      run methods x seeds, write CSVs
    actiongraphpy verify [--json] [--op NAME ...]     oracle suite, PASS/FAIL lines
    actiongraphpy heatmap <checkpoint> <config>       attention CSVs of a trained agent
    actiongraphpy bench --agents 2 4 --actions 2 4    message-passing timings

Global options `--log-level` and `--log-file` configure the package logger. Every
command returns 0 on success; library errors print one line to stderr and return 2,
a failed cell or oracle check returns 1.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path
from typing import *

from . import __version__
from .bench import bench_complexity
from .config import parse_config
from .environments import CoordinationGame
from .exceptions import ActionGraphError
from .fileops import load_checkpoint
from .heatmaps import attention_summary, export_heatmaps
from .paths import OutputPaths
from .runner import run_suite
from .utils import SeedStreams, logger_setup
from .verify import verify

logger = logging.getLogger(__name__)

__all__ = ["build_parser", "main"]


def _cmd_train(args: argparse.Namespace) -> int:
    config = parse_config(args.config)
    if args.workers is not None:
        config.workers = args.workers
    report = run_suite(config, progress=not args.quiet)
    for row in report.aggregate:
        print(f"{row.method:<14} runs={row.runs} final success {row.mean_final_success:.3f} "
              f"+/- {row.std_final_success:.3f}")
    for cell in report.failed:
        print(f"FAILED {cell.method.value} seed={cell.seed}: {cell.error}", file=sys.stderr)
    print(f"wrote {report.aggregate_path} and {report.manifest_path}")
    return report.exit_code


def _cmd_verify(args: argparse.Namespace) -> int:
    return verify(json_output=args.json, ops=args.op)


def _cmd_heatmap(args: argparse.Namespace) -> int:
    config = parse_config(args.config)
    checkpoint = load_checkpoint(args.checkpoint)
    agent = checkpoint.agent
    seed = int(checkpoint.metadata.get("seed", config.train.seed))
    if args.out is not None:
        folder = Path(args.out)
    else:
        folder = OutputPaths.resolve(config.output_dir).run_dir(agent.kind, seed)
    batch = args.batch or config.heatmap_batch
    export = export_heatmaps(agent, CoordinationGame(agent.spec), batch, folder,
                             SeedStreams(seed).generator("export"))
    summary = attention_summary(export)
    for key, value in summary.items():
        print(f"{key:<20} {value:.6f}")
    print(f"wrote {len(export.files)} files to {folder}")
    return 0


def _cmd_bench(args: argparse.Namespace) -> int:
    out = Path(args.out) if args.out else OutputPaths.resolve(None).bench_csv
    rows = bench_complexity(args.agents, args.actions, args.reps, hidden_dim=args.hidden_dim,
                            num_layers=args.num_layers, num_heads=args.num_heads, seed=args.seed, path=out)
    print(f"{'N':>4} {'A':>4} {'V':>5} {'mean_us':>12} {'units':>14}")
    for r in rows:
        print(f"{r.num_agents:>4} {r.num_actions:>4} {r.num_nodes:>5} {r.mean_us:>12.1f} {r.complexity_units:>14}")
    print(f"wrote {out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="actiongraphpy",
                                     description="Action-graph policies for cooperative coordination games.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("--log-level", default="INFO", choices=["DEBUG", "INFO", "WARNING", "ERROR"],
                        help="console log level (default: INFO)")
    parser.add_argument("--log-file", default=None, help="also log to this file at DEBUG level")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train every method for every seed in a config")
    p.add_argument("config", help="YAML experiment configuration")
    p.add_argument("--workers", type=int, default=None, help="override experiment.workers")
    p.add_argument("--quiet", action="store_true", help="no progress bars")
    p.set_defaults(func=_cmd_train)

    p = sub.add_parser("verify", help="run the analytic and brute-force oracle checks")
    p.add_argument("--json", action="store_true", help="print the JSON summary instead of PASS/FAIL lines")
    p.add_argument("--op", action="append", default=None, help="only checks of this oracle op (repeatable)")
    p.set_defaults(func=_cmd_verify)

    p = sub.add_parser("heatmap", help="export attention heatmaps from a checkpoint")
    p.add_argument("checkpoint", help="checkpoint.agp written by `train`")
    p.add_argument("config", help="configuration the checkpoint was trained with")
    p.add_argument("--out", default=None, help="folder for the CSVs (default: the run directory)")
    p.add_argument("--batch", type=int, default=None, help="evaluation resets to average (default: heatmap_batch)")
    p.set_defaults(func=_cmd_heatmap)

    p = sub.add_parser("bench", help="time message passing across graph sizes")
    p.add_argument("--agents", type=int, nargs="+", default=[2, 4, 8], help="agent counts N")
    p.add_argument("--actions", type=int, nargs="+", default=[2, 4], help="action counts |A|")
    p.add_argument("--reps", type=int, default=20, help="timed passes per size")
    p.add_argument("--hidden-dim", type=int, default=64)
    p.add_argument("--num-layers", type=int, default=2)
    p.add_argument("--num-heads", type=int, default=4)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default=None, help="CSV path (default: <output root>/bench.csv)")
    p.set_defaults(func=_cmd_bench)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    file_level = logging.DEBUG if args.log_file else None
    logger_setup("actiongraphpy", getattr(logging, args.log_level), log_to_file=args.log_file, file_level=file_level)
    try:
        return int(args.func(args))
    except ActionGraphError as exc:
        logger.debug("command %s failed", args.command, exc_info=True)
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
