"""
actiongraphpy.bench
-------------------

Wall-clock cost of one action-graph message-passing forward pass across sizes.

Each (N, |A|) pair gets one CSV row: N, |A|, |V| = N * |A|, mean microseconds per
pass and the operation count L * H * |V|^2 * d. Purely informational: nothing is
asserted about the timings; the ratio between consecutive |V| sizes is logged.
"""

from __future__ import annotations

import logging
from itertools import product
from pathlib import Path
from typing import *

import numpy as np

from .action_graph import GraphParams, build_node_set, encode_nodes, full_edge_mask, message_pass
from .exceptions import BenchmarkError
from .fileops import BenchRow, write_bench_csv
from .utils import SeedStreams, metrics_collector

logger = logging.getLogger(__name__)

__all__ = ["complexity_units", "bench_complexity"]


def complexity_units(num_agents: int, num_actions: int, num_layers: int = 2, num_heads: int = 4,
                     hidden_dim: int = 64) -> int:
    """L * H * |V|^2 * d."""
    v = int(num_agents) * int(num_actions)
    return int(num_layers) * int(num_heads) * v * v * int(hidden_dim)


def bench_complexity(agent_counts: Sequence[int], action_counts: Sequence[int], reps: int, *,
                     hidden_dim: int = 64, num_layers: int = 2, num_heads: int = 4, seed: int = 0,
                     path: Optional[Union[str, Path]] = None,
                     metrics: Optional[metrics_collector] = None) -> List[BenchRow]:
    """
    Time `reps` forward passes of message_pass for every (N, |A|) pair.

    Parameters
    ----------
    agent_counts, action_counts : Sequence[int]
        Grid of sizes; one row per pair.
    reps : int
        Timed passes per pair (one untimed warm-up pass precedes them).
    path : Optional[str | Path]
        Write the CSV here when given.
    metrics : Optional[metrics_collector]
        Collector receiving one timer sample per pass under "forward/N{n}A{a}".

    Raises
    ------
    BenchmarkError
        reps < 1, or an empty / non-positive size list.
    """
    if reps < 1:
        raise BenchmarkError(f"reps must be >= 1, got {reps}", detail={"reps": reps})
    if not agent_counts or not action_counts or min(agent_counts) < 1 or min(action_counts) < 1:
        raise BenchmarkError("agent and action counts must be nonempty lists of positive integers")
    metrics = metrics or metrics_collector()
    rng = SeedStreams(seed).generator("init")
    rows: List[BenchRow] = []
    for n, a in product(agent_counts, action_counts):
        node_set = build_node_set([a] * n)
        params = GraphParams(1, a, rng, hidden_dim=hidden_dim, num_layers=num_layers, num_heads=num_heads)
        features = rng.uniform(0.0, 1.0, size=(1, n, 1))
        avail = np.ones((1, n, a), dtype=np.int8)
        edges = full_edge_mask(node_set)
        x = encode_nodes(features, node_set, params)
        message_pass(x, node_set, avail, edges, params)
        key = f"forward/N{n}A{a}"
        for _ in range(reps):
            with metrics.timer(key):
                message_pass(x, node_set, avail, edges, params)
            metrics.increment("passes")
        samples = metrics.samples(key)
        mean_us = 1e6 * float(np.mean(samples[-reps:]))
        rows.append(BenchRow(n, a, node_set.size, mean_us,
                             complexity_units(n, a, num_layers, num_heads, hidden_dim)))
        logger.info("N=%d |A|=%d |V|=%d: %.1f us/pass", n, a, node_set.size, mean_us)

    by_size = sorted(rows, key=lambda r: r.num_nodes)
    for small, large in zip(by_size, by_size[1:]):
        if large.num_nodes == 2 * small.num_nodes and small.mean_us > 0:
            logger.info("|V| %d -> %d: time ratio %.2f", small.num_nodes, large.num_nodes,
                        large.mean_us / small.mean_us)
    if path is not None:
        write_bench_csv(rows, path)
    return rows
