"""
actiongraphpy.paths
-------------------

Output layout of a training suite and an OutputPaths dataclass used by the runner,
the heatmap exporter and the benchmark.

Responsibilities
- Resolve the output root (config value, overridden by the ACTIONGRAPHPY_OUT env var).
- Map (method, seed) cells to their run directories and files.
- Create required directories on demand.

Layout
------
<root>/aggregate.csv
<root>/manifest.json
<root>/bench.csv
<root>/<method>/<seed>/curve.csv
<root>/<method>/<seed>/checkpoint.agp
<root>/<method>/<seed>/attn_L{l}H{h}.csv
<root>/<method>/<seed>/attn_L{l}mean.csv

Usage
-----
from actiongraphpy.paths import OutputPaths

paths = OutputPaths.resolve("out")
curve = paths.curve_csv("AGP_Q", 0)
"""

from __future__ import annotations

import os
import re
from dataclasses import dataclass
from pathlib import Path
from typing import *

from .types_models import AgentKind

OUTPUT_ENV_VAR = "ACTIONGRAPHPY_OUT"
CHECKPOINT_NAME = "checkpoint.agp"


def _slugify(value: Any) -> str:
    """
    Filesystem-safe name for a method directory.
    Keeps letters, digits, underscores and hyphens.
    """
    value = value.value if isinstance(value, AgentKind) else str(value)
    value = re.sub(r"\s+", "-", value.strip())
    value = re.sub(r"[^A-Za-z0-9\-_\.]", "", value)
    return value or "run"


def _ensure_dir(path: Path, mode: int = 0o755) -> Path:
    path = Path(path)
    path.mkdir(mode=mode, parents=True, exist_ok=True)
    return path


def resolve_output_root(configured: Optional[Union[str, Path]] = None) -> Path:
    """ACTIONGRAPHPY_OUT if set and non-empty, else `configured`, else ./out."""
    override = os.getenv(OUTPUT_ENV_VAR)
    if override:
        return Path(override).expanduser()
    return Path(configured).expanduser() if configured else Path("out")


@dataclass
class OutputPaths:
    """
    Container for the files one suite writes.

    Attributes
    ----------
    root : pathlib.Path
        Output root (aggregate, manifest and bench files live here).
    """

    root: Path

    @classmethod
    def resolve(cls, configured: Optional[Union[str, Path]] = None) -> "OutputPaths":
        """Build OutputPaths, honoring the ACTIONGRAPHPY_OUT override."""
        return cls(root=resolve_output_root(configured))

    def run_dir(self, method: Union[AgentKind, str], seed: int) -> Path:
        return self.root / _slugify(method) / str(int(seed))

    def curve_csv(self, method: Union[AgentKind, str], seed: int) -> Path:
        return self.run_dir(method, seed) / "curve.csv"

    def checkpoint(self, method: Union[AgentKind, str], seed: int) -> Path:
        return self.run_dir(method, seed) / CHECKPOINT_NAME

    def heatmap_csv(self, method: Union[AgentKind, str], seed: int, layer: int, head: Optional[int] = None) -> Path:
        """attn_L{l}H{h}.csv, or attn_L{l}mean.csv for the across-head mean (head=None)."""
        return heatmap_file(self.run_dir(method, seed), layer, head)

    @property
    def aggregate_csv(self) -> Path:
        return self.root / "aggregate.csv"

    @property
    def manifest_json(self) -> Path:
        return self.root / "manifest.json"

    @property
    def bench_csv(self) -> Path:
        return self.root / "bench.csv"

    def ensure_dirs(self, cells: Iterable[Tuple[Union[AgentKind, str], int]] = (), *, mode: int = 0o755) -> None:
        """Create the root and one run directory per (method, seed) cell."""
        _ensure_dir(self.root, mode=mode)
        for method, seed in cells:
            _ensure_dir(self.run_dir(method, seed), mode=mode)

    def __repr__(self) -> str:
        return f"<OutputPaths root={str(self.root)!r}>"


def heatmap_file(folder: Union[str, Path], layer: int, head: Optional[int] = None) -> Path:
    suffix = "mean" if head is None else f"H{int(head)}"
    return Path(folder) / f"attn_L{int(layer)}{suffix}.csv"
