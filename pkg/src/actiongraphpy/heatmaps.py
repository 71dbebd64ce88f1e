"""
actiongraphpy.heatmaps
----------------------

Attention heatmaps of a trained action-graph agent.

`export_heatmaps` averages the attention weights of every layer and head over a batch
of evaluation resets and writes one labeled |V| x |V| CSV per (layer, head) plus the
across-head mean per layer. Rows are queries, columns are keys; labels read
"agent{i}-act{a}". Averages of row-stochastic matrices stay row-stochastic.

`attention_summary` condenses an export into the quantities used to read it:
cross-agent mass, mean cross-agent act1->act1 and act1->act0 weights, and the mass an
action node keeps on its own agent's nodes.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import *

import numpy as np

from .action_graph import ActionNodeSet
from .agents import Agent
from .environments import CoordinationGame
from .exceptions import KindMismatchError, SpecValidationError
from .fileops import write_matrix_csv
from .paths import heatmap_file

logger = logging.getLogger(__name__)

__all__ = ["HeatmapExport", "export_heatmaps", "attention_summary"]


@dataclass
class HeatmapExport:
    """
    Batch-averaged attention of one agent.

    Attributes
    ----------
    layers : List[np.ndarray]
        Per layer, an (H, V, V) array of averaged weights.
    node_set : ActionNodeSet
    batch : int
        Number of evaluation resets averaged.
    files : List[Path]
        CSVs written (empty when no folder was given).
    """
    layers: List[np.ndarray]
    node_set: ActionNodeSet
    batch: int
    files: List[Path] = field(default_factory=list)

    @property
    def labels(self) -> List[str]:
        return self.node_set.labels()

    @property
    def num_layers(self) -> int:
        return len(self.layers)

    @property
    def num_heads(self) -> int:
        return int(self.layers[0].shape[0]) if self.layers else 0

    def head(self, layer: int, head: int) -> np.ndarray:
        return self.layers[layer][head]

    def mean(self, layer: int) -> np.ndarray:
        return self.layers[layer].mean(axis=0)

    def matrices(self) -> Iterator[Tuple[int, Optional[int], np.ndarray]]:
        """(layer, head or None for the mean, matrix) for every exported CSV."""
        for l in range(self.num_layers):
            for h in range(self.num_heads):
                yield l, h, self.head(l, h)
            yield l, None, self.mean(l)


def export_heatmaps(agent: Agent, env: CoordinationGame, batch: int, path: Optional[Union[str, Path]],
                    rng: np.random.Generator) -> HeatmapExport:
    """
    Average attention over `batch` resets and write the CSVs under `path`.

    Parameters
    ----------
    agent : Agent
        An agent whose kind uses the action graph.
    env : CoordinationGame
        Game to reset (a clone is used; `env` itself is untouched).
    batch : int
        Number of evaluation resets (default 1,000 in the suite).
    path : Optional[str | Path]
        Folder for attn_L{l}H{h}.csv / attn_L{l}mean.csv; None skips writing.
    rng : np.random.Generator
        Reset stream.

    Raises
    ------
    KindMismatchError
        The agent has no action graph (IQL, VDN, AGP_NO_GRAPH).
    """
    if agent.graph is None:
        raise KindMismatchError(f"{agent.kind.value} has no action graph to export")
    if batch < 1:
        raise SpecValidationError(f"batch must be positive, got {batch}", detail=batch)
    game = env.clone()
    observations = [game.reset(rng) for _ in range(batch)]
    features = np.stack([o.features for o in observations])
    avail = np.stack([o.avail for o in observations])
    _, record = agent.graph.contexts(features, avail)
    export = HeatmapExport(layers=record.batch_mean(), node_set=record.node_set, batch=batch)
    if path is not None:
        folder = Path(path)
        for layer, head, matrix in export.matrices():
            export.files.append(write_matrix_csv(matrix, export.labels, heatmap_file(folder, layer, head)))
        logger.info("wrote %d heatmaps for %s to %s", len(export.files), agent.kind.value, folder)
    return export


def attention_summary(export: Union[HeatmapExport, np.ndarray], node_set: Optional[ActionNodeSet] = None,
                      *, layer: int = -1) -> Dict[str, float]:
    """
    Cross-agent reading of one attention matrix (default: last layer, head mean).

    Returns
    -------
    Dict[str, float]
        cross_agent_mass        mean over rows of weight on other agents' nodes
        self_agent_mass         1 - cross_agent_mass
        cross_act1_to_act1      mean weight of act1 -> act1 cells across agents
        cross_act1_to_act0      mean weight of act1 -> act0 cells across agents
        uniform_baseline        1 / |V|
    """
    if isinstance(export, HeatmapExport):
        matrix = export.mean(layer)
        node_set = export.node_set
    else:
        matrix = np.asarray(export, dtype=np.float64)
        if node_set is None:
            raise SpecValidationError("node_set is required when passing a raw matrix")
    agent_of = node_set.agent_of
    action_of = node_set.action_of
    cross = agent_of[:, None] != agent_of[None, :]
    cross_mass = float((matrix * cross).sum(axis=1).mean())

    def _cells(src: int, dst: int) -> float:
        sel = cross & (action_of[:, None] == src) & (action_of[None, :] == dst)
        return float(matrix[sel].mean()) if sel.any() else 0.0

    return {
        "cross_agent_mass": cross_mass,
        "self_agent_mass": 1.0 - cross_mass,
        "cross_act1_to_act1": _cells(1, 1),
        "cross_act1_to_act0": _cells(1, 0),
        "uniform_baseline": 1.0 / node_set.size,
    }
