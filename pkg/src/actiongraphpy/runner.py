"""
actiongraphpy.runner
--------------------

Seeded multi-run orchestration: every method in an ExperimentConfig trained once per
seed, with per-cell outputs, an aggregate success table and a manifest.

Features
- One cell per (method, seed); cells run in a ThreadPoolExecutor (`workers`) and share
  nothing mutable. The aggregate writer runs after all cells joined.
- Per cell: curve.csv, checkpoint.agp and, when enabled for graph-based methods,
  attention heatmaps.
- A failing cell is logged and recorded; the other cells' files are kept and the
  manifest lists the failure.

Usage
-----
>>> report = run_suite(parse_config("configs/topk.yaml"))
>>> report.exit_code
0
"""

from __future__ import annotations

import logging
import math
import time
from concurrent.futures import ThreadPoolExecutor, as_completed
from dataclasses import dataclass, field
from pathlib import Path
from typing import *

import numpy as np
from tqdm import tqdm

from .environments import CoordinationGame
from .fileops import AggregateRow, safe_remove, save_checkpoint, write_aggregate_csv, write_curve_csv, write_manifest
from .heatmaps import export_heatmaps
from .paths import OutputPaths
from .training import train
from .types_models import AgentKind, ExperimentConfig, LearningCurve
from .utils import SeedStreams

logger = logging.getLogger(__name__)

__all__ = ["CellResult", "SuiteReport", "run_cell", "aggregate", "run_suite"]


@dataclass
class CellResult:
    """Outcome of one (method, seed) cell."""
    method: AgentKind
    seed: int
    success: bool = False
    curve: Optional[LearningCurve] = None
    curve_path: Optional[Path] = None
    checkpoint_path: Optional[Path] = None
    heatmap_files: List[Path] = field(default_factory=list)
    error: Optional[str] = None
    wall_time: float = 0.0

    @property
    def final_success(self) -> Optional[float]:
        return self.curve.final_success if self.curve is not None else None

    def to_dict(self, root: Optional[Path] = None) -> Dict[str, Any]:
        def rel(p: Optional[Path]) -> Optional[str]:
            if p is None:
                return None
            try:
                return str(p.relative_to(root)) if root is not None else str(p)
            except ValueError:
                return str(p)

        return {
            "method": self.method.value,
            "seed": self.seed,
            "status": "ok" if self.success else "failed",
            "error": self.error,
            "final_success": self.final_success,
            "curve": rel(self.curve_path),
            "checkpoint": rel(self.checkpoint_path),
            "heatmaps": [rel(p) for p in self.heatmap_files],
            "wall_time": self.wall_time,
        }


@dataclass
class SuiteReport:
    """Everything run_suite produced; `exit_code` is 0 iff every cell succeeded."""
    cells: List[CellResult] = field(default_factory=list)
    aggregate: List[AggregateRow] = field(default_factory=list)
    aggregate_path: Optional[Path] = None
    manifest_path: Optional[Path] = None
    time_elapsed: float = 0.0

    @property
    def failed(self) -> List[CellResult]:
        return [c for c in self.cells if not c.success]

    @property
    def success(self) -> bool:
        return not self.failed

    @property
    def exit_code(self) -> int:
        return 0 if self.success else 1

    def __repr__(self) -> str:
        return f"<SuiteReport cells={len(self.cells)} failed={len(self.failed)}>"


def run_cell(config: ExperimentConfig, method: AgentKind, seed: int, paths: OutputPaths, *,
             progress: bool = False) -> CellResult:
    """Train one cell and write its files. Exceptions propagate to the caller."""
    start = time.perf_counter()
    cell_config = config.train.with_run(method, seed)
    run_dir = paths.run_dir(method, seed)
    # stale heatmaps from an earlier run must not survive into this one
    safe_remove(run_dir)
    paths.ensure_dirs([(method, seed)])
    logger.info("cell %s seed=%d: start (%d episodes)", method.value, seed, cell_config.episodes)

    result = train(cell_config, progress=progress)
    cell = CellResult(method=method, seed=seed, curve=result.curve)
    cell.curve_path = write_curve_csv(result.curve, paths.curve_csv(method, seed))
    cell.checkpoint_path = save_checkpoint(result.agent, paths.checkpoint(method, seed),
                                           extra={"seed": seed, "episodes": cell_config.episodes})
    if config.heatmaps and result.agent.graph is not None:
        export = export_heatmaps(result.agent, CoordinationGame(cell_config.env), config.heatmap_batch, run_dir,
                                 SeedStreams(seed).generator("export"))
        cell.heatmap_files = list(export.files)
    cell.success = True
    cell.wall_time = time.perf_counter() - start
    logger.info("cell %s seed=%d: done, final success %s", method.value, seed, cell.final_success)
    return cell


def aggregate(cells: Iterable[CellResult], methods: Sequence[AgentKind]) -> List[AggregateRow]:
    """Per method: number of finished runs, mean and (population) std of final success."""
    rows: List[AggregateRow] = []
    for method in methods:
        finals = [c.final_success for c in cells if c.method is method and c.success and c.final_success is not None]
        if finals:
            rows.append(AggregateRow(method.value, len(finals), float(np.mean(finals)), float(np.std(finals))))
        else:
            rows.append(AggregateRow(method.value, 0, math.nan, math.nan))
    return rows


def run_suite(config: ExperimentConfig, *, progress: bool = False,
              progress_callback: Optional[Callable[[CellResult], None]] = None) -> SuiteReport:
    """
    Run methods x seeds and write curve, aggregate, heatmap and manifest files.

    Parameters
    ----------
    config : ExperimentConfig
        Validated suite description.
    progress : bool
        Show tqdm bars (per cell and for the suite).
    progress_callback : Optional[Callable[[CellResult], None]]
        Called after each cell finishes (success or failure).

    Returns
    -------
    SuiteReport
    """
    config.validate()
    start = time.perf_counter()
    paths = OutputPaths.resolve(config.output_dir)
    paths.ensure_dirs()
    cells = [(m, s) for m in config.methods for s in config.seeds]
    results: Dict[Tuple[AgentKind, int], CellResult] = {}

    def _task(cell: Tuple[AgentKind, int]) -> CellResult:
        method, seed = cell
        return run_cell(config, method, seed, paths, progress=progress and config.workers == 1)

    bar = tqdm(total=len(cells), desc="suite", unit="run", ncols=80, disable=not progress)
    with ThreadPoolExecutor(max_workers=config.workers) as exe:
        future_to_cell = {exe.submit(_task, cell): cell for cell in cells}
        for fut in as_completed(future_to_cell):
            method, seed = future_to_cell[fut]
            try:
                res = fut.result()
            except Exception as exc:
                logger.exception("cell %s seed=%d failed", method.value, seed)
                res = CellResult(method=method, seed=seed, success=False, error=f"{type(exc).__name__}: {exc}")
            results[(method, seed)] = res
            bar.update(1)
            if progress_callback:
                try:
                    progress_callback(res)
                except Exception:
                    logger.debug("progress callback raised", exc_info=True)
    bar.close()

    report = SuiteReport(cells=[results[c] for c in cells])
    report.aggregate = aggregate(report.cells, config.methods)
    report.aggregate_path = write_aggregate_csv(report.aggregate, paths.aggregate_csv)
    report.time_elapsed = time.perf_counter() - start
    report.manifest_path = write_manifest(
        paths.manifest_json,
        [c.to_dict(paths.root) for c in report.cells],
        config=config.to_dict(),
        success=report.success,
        time_elapsed=report.time_elapsed,
    )
    if report.failed:
        logger.warning("%d of %d cells failed; see %s", len(report.failed), len(cells), report.manifest_path)
    return report
