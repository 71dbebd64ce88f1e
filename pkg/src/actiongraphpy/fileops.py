"""
actiongraphpy.fileops
---------------------

File codecs used by the runner, heatmap exporter and benchmark:

- CSV writers / readers for learning curves, the aggregate table, attention matrices
  and benchmark timings (17 significant digits, so parse(emit(x)) == x)
- save_checkpoint / load_checkpoint: versioned text dump of named parameter tensors
- write_manifest / read_manifest: JSON record of every suite cell
- safe_remove: remove a file or directory with retries

All writers go through `utils.atomic_write` (temp file -> fsync -> replace), so a
crashed run never leaves a half-written CSV behind.

Checkpoint format
-----------------
    # actiongraphpy-checkpoint 1.0
    {"kind": "AGP_Q", "env": {...}, "hidden_dim": 64, "num_layers": 2, "num_heads": 4, "created": "..."}
    <name>\t<shape, comma separated>\t<space separated values>
    ...
Loading rejects a different major version.
"""

from __future__ import annotations

import csv
import io
import json
import logging
import shutil
import time
from dataclasses import dataclass, field
from datetime import datetime
from pathlib import Path
from typing import *

import numpy as np

from .agents import Agent
from .exceptions import CheckpointError, ExportError
from .types_models import AgentKind, CurvePoint, EnvSpec, LearningCurve
from .utils import atomic_write, format_float, parse_timestamp, parse_version, utc_timestamp

logger = logging.getLogger(__name__)

__all__ = [
    "CURVE_HEADER", "AGGREGATE_HEADER", "BENCH_HEADER", "CHECKPOINT_VERSION",
    "AggregateRow", "BenchRow", "Checkpoint",
    "write_curve_csv", "read_curve_csv", "write_aggregate_csv", "read_aggregate_csv",
    "write_matrix_csv", "read_matrix_csv", "write_bench_csv", "read_bench_csv",
    "save_checkpoint", "load_checkpoint", "write_manifest", "read_manifest", "safe_remove",
]

CURVE_HEADER = ("episode", "mean_reward", "success_rate", "epsilon")
AGGREGATE_HEADER = ("method", "runs", "mean_final_success", "std_final_success")
BENCH_HEADER = ("N", "A", "V", "mean_us", "complexity_units")
CHECKPOINT_MAGIC = "# actiongraphpy-checkpoint"
CHECKPOINT_VERSION = "1.0"


@dataclass(frozen=True)
class AggregateRow:
    method: str
    runs: int
    mean_final_success: float
    std_final_success: float


@dataclass(frozen=True)
class BenchRow:
    num_agents: int
    num_actions: int
    num_nodes: int
    mean_us: float
    complexity_units: int


@dataclass
class Checkpoint:
    """A loaded checkpoint: the rebuilt agent plus its metadata line."""
    agent: Agent
    metadata: Dict[str, Any] = field(default_factory=dict)
    version: str = CHECKPOINT_VERSION

    @property
    def created(self) -> Optional[datetime]:
        return parse_timestamp(self.metadata.get("created"))


def _emit_csv(path: Union[str, Path], header: Sequence[str], rows: Iterable[Sequence[Any]]) -> Path:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow(row)
    try:
        atomic_write(str(path), buf.getvalue())
    except OSError as exc:
        raise ExportError(f"could not write {path}: {exc}", detail={"path": str(path)}) from exc
    return Path(path)


def _parse_csv(path: Union[str, Path], header: Optional[Sequence[str]] = None) -> Tuple[List[str], List[List[str]]]:
    try:
        with open(path, "r", encoding="utf-8", newline="") as fh:
            rows = list(csv.reader(fh))
    except OSError as exc:
        raise ExportError(f"could not read {path}: {exc}", detail={"path": str(path)}) from exc
    if not rows:
        raise ExportError(f"{path} is empty; expected a header row")
    if header is not None and tuple(rows[0]) != tuple(header):
        raise ExportError(f"{path}: header {rows[0]} != expected {list(header)}")
    return rows[0], rows[1:]


# Learning curves
def write_curve_csv(curve: LearningCurve, path: Union[str, Path]) -> Path:
    """episode, mean_reward, success_rate, epsilon; header only for an empty curve."""
    return _emit_csv(path, CURVE_HEADER, (
        (p.episode, format_float(p.mean_reward), format_float(p.success_rate), format_float(p.epsilon))
        for p in curve.points
    ))


def read_curve_csv(path: Union[str, Path], *, method: Optional[AgentKind] = None,
                   seed: Optional[int] = None) -> LearningCurve:
    _, rows = _parse_csv(path, CURVE_HEADER)
    curve = LearningCurve(method=method, seed=seed)
    try:
        for row in rows:
            curve.append(CurvePoint(episode=int(row[0]), mean_reward=float(row[1]),
                                    success_rate=float(row[2]), epsilon=float(row[3])))
    except (ValueError, IndexError) as exc:
        raise ExportError(f"{path}: malformed curve row: {exc}") from exc
    return curve


# Aggregate table
def write_aggregate_csv(rows: Iterable[AggregateRow], path: Union[str, Path]) -> Path:
    return _emit_csv(path, AGGREGATE_HEADER, (
        (r.method, r.runs, format_float(r.mean_final_success), format_float(r.std_final_success)) for r in rows
    ))


def read_aggregate_csv(path: Union[str, Path]) -> List[AggregateRow]:
    _, rows = _parse_csv(path, AGGREGATE_HEADER)
    try:
        return [AggregateRow(r[0], int(r[1]), float(r[2]), float(r[3])) for r in rows]
    except (ValueError, IndexError) as exc:
        raise ExportError(f"{path}: malformed aggregate row: {exc}") from exc


# Attention matrices
def write_matrix_csv(matrix: np.ndarray, labels: Sequence[str], path: Union[str, Path]) -> Path:
    """Square matrix with a label header row and a label first column."""
    m = np.asarray(matrix, dtype=np.float64)
    if m.ndim != 2 or m.shape[0] != m.shape[1] or m.shape[0] != len(labels):
        raise ExportError(f"matrix shape {m.shape} does not match {len(labels)} labels")
    return _emit_csv(path, ["node", *labels], (
        [label, *(format_float(v) for v in row)] for label, row in zip(labels, m)
    ))


def read_matrix_csv(path: Union[str, Path]) -> Tuple[List[str], np.ndarray]:
    header, rows = _parse_csv(path)
    labels = header[1:]
    if [r[0] for r in rows] != labels:
        raise ExportError(f"{path}: row labels do not match column labels")
    try:
        values = np.array([[float(v) for v in r[1:]] for r in rows], dtype=np.float64)
    except ValueError as exc:
        raise ExportError(f"{path}: malformed matrix value: {exc}") from exc
    return labels, values.reshape(len(labels), len(labels))


# Benchmark timings
def write_bench_csv(rows: Iterable[BenchRow], path: Union[str, Path]) -> Path:
    return _emit_csv(path, BENCH_HEADER, (
        (r.num_agents, r.num_actions, r.num_nodes, format_float(r.mean_us), r.complexity_units) for r in rows
    ))


def read_bench_csv(path: Union[str, Path]) -> List[BenchRow]:
    _, rows = _parse_csv(path, BENCH_HEADER)
    try:
        return [BenchRow(int(r[0]), int(r[1]), int(r[2]), float(r[3]), int(r[4])) for r in rows]
    except (ValueError, IndexError) as exc:
        raise ExportError(f"{path}: malformed bench row: {exc}") from exc


# Checkpoints
def save_checkpoint(agent: Agent, path: Union[str, Path], *, extra: Optional[Dict[str, Any]] = None) -> Path:
    """
    Dump every named parameter of `agent` with its shape.

    Parameters
    ----------
    agent : Agent
        Trained agent.
    path : str | Path
        Destination (written atomically).
    extra : Optional[Dict[str, Any]]
        Additional JSON-serializable metadata (seed, episodes, ...).
    """
    meta = {
        "kind": agent.kind.value,
        "env": agent.spec.to_dict(),
        "hidden_dim": agent.hidden_dim,
        "num_layers": agent.num_layers,
        "num_heads": agent.num_heads,
        "created": utc_timestamp(),
    }
    meta.update(extra or {})
    lines = [f"{CHECKPOINT_MAGIC} {CHECKPOINT_VERSION}", json.dumps(meta, sort_keys=True)]
    for name, values in agent.state_dict().items():
        shape = ",".join(str(s) for s in values.shape)
        lines.append(f"{name}\t{shape}\t{' '.join(format_float(v) for v in values.reshape(-1))}")
    try:
        atomic_write(str(path), "\n".join(lines) + "\n")
    except OSError as exc:
        raise CheckpointError(f"could not write checkpoint {path}: {exc}") from exc
    logger.debug("saved %d tensors to %s", len(lines) - 2, path)
    return Path(path)


def _read_header(line: str, path: Union[str, Path]) -> str:
    if not line.startswith(CHECKPOINT_MAGIC):
        raise CheckpointError(f"{path} is not an actiongraphpy checkpoint")
    raw = line[len(CHECKPOINT_MAGIC):].strip()
    try:
        found = parse_version(raw)
    except Exception as exc:
        raise CheckpointError(f"{path}: invalid checkpoint version {raw!r}") from exc
    if found.major != parse_version(CHECKPOINT_VERSION).major:
        raise CheckpointError(f"{path}: unsupported checkpoint version {raw} (reader is {CHECKPOINT_VERSION})",
                              detail={"version": raw})
    return raw


def load_checkpoint(path: Union[str, Path]) -> Checkpoint:
    """
    Rebuild the agent stored at `path`.

    Raises
    ------
    CheckpointError
        Missing file, bad header, unsupported major version, or malformed tensor line.
    """
    try:
        with open(path, "r", encoding="utf-8") as fh:
            lines = fh.read().splitlines()
    except OSError as exc:
        raise CheckpointError(f"could not read checkpoint {path}: {exc}") from exc
    if len(lines) < 2:
        raise CheckpointError(f"{path}: truncated checkpoint")
    ver = _read_header(lines[0], path)
    try:
        meta = json.loads(lines[1])
        spec = EnvSpec.from_dict(meta["env"])
        kind = AgentKind.parse(meta["kind"])
    except (ValueError, KeyError, TypeError) as exc:
        raise CheckpointError(f"{path}: malformed metadata line: {exc}") from exc

    state: Dict[str, np.ndarray] = {}
    for lineno, line in enumerate(lines[2:], start=3):
        if not line.strip():
            continue
        try:
            name, shape_txt, values_txt = line.split("\t")
            shape = tuple(int(s) for s in shape_txt.split(",") if s)
            values = np.array([float(v) for v in values_txt.split()], dtype=np.float64).reshape(shape)
        except ValueError as exc:
            raise CheckpointError(f"{path}:{lineno}: malformed tensor line: {exc}") from exc
        state[name] = values

    # init values are overwritten below; the generator only sizes the parameters
    agent = Agent(kind, spec, np.random.default_rng(0), hidden_dim=int(meta.get("hidden_dim", 64)),
                  num_layers=int(meta.get("num_layers", 2)), num_heads=int(meta.get("num_heads", 4)))
    try:
        agent.load_state_dict(state)
    except ValueError as exc:
        raise CheckpointError(f"{path}: {exc}") from exc
    return Checkpoint(agent=agent, metadata=meta, version=ver)


# Manifest
def write_manifest(path: Union[str, Path], cells: Sequence[Dict[str, Any]], **extra: Any) -> Path:
    payload = {"created": utc_timestamp(), "cells": list(cells)}
    payload.update(extra)
    try:
        atomic_write(str(path), json.dumps(payload, indent=2, sort_keys=True) + "\n")
    except OSError as exc:
        raise ExportError(f"could not write manifest {path}: {exc}") from exc
    return Path(path)


def read_manifest(path: Union[str, Path]) -> Dict[str, Any]:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            return json.load(fh)
    except (OSError, ValueError) as exc:
        raise ExportError(f"could not read manifest {path}: {exc}") from exc


def safe_remove(path: Union[str, Path], *, retries: int = 3, delay: float = 0.2) -> None:
    """
    Remove a file or directory, retrying transient errors.

    Raises
    ------
    OSError
        If removal still fails after `retries` attempts.
    """
    path = Path(path)
    attempt = 0
    while True:
        try:
            if path.is_dir() and not path.is_symlink():
                shutil.rmtree(path)
            elif path.exists():
                path.unlink()
            return
        except FileNotFoundError:
            return
        except OSError:
            attempt += 1
            if attempt > retries:
                raise
            time.sleep(delay)
