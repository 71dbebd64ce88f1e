"""
actiongraphpy.action_graph
--------------------------

The action-graph core: one node per (agent, action) pair, a shared node encoder,
L layers of multi-head scaled dot-product attention over all nodes, and masked-mean
pooling of each agent's own nodes into its coordination context.

Pipeline (batched; B = batch, N = agents, V = nodes, d = hidden width)
  features (B,N,D), avail (B,N,A)
    -> node inputs concat(o_i, onehot(a))           (B,V,D+A)
    -> encoder phi (2-layer MLP, ReLU)               x  (B,V,d)
    -> input projection W                            z0 (B,V,d)
    -> L x [multi-head attention + residual]         h  (B,V,d)
    -> masked mean over agent i's available nodes    kappa (B,N,d)

Masking
- Unavailable nodes are never attention targets and never pooled; their rows are still
  computed.
- The edge mask is either full (all pairs) or same-agent (no cross-agent edges).
- Self-edges are always open, so every row has support.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import *

import numpy as np

from .exceptions import ShapeMismatchError, AllMaskedError, SpecValidationError
from .tensor import (
    Tensor, MLP, init_uniform, matmul, add, scale, reshape, transpose,
    masked_softmax, masked_mean,
)
from .types_models import EnvSpec

logger = logging.getLogger(__name__)

__all__ = [
    "ActionNodeSet", "GraphParams", "AttentionRecord", "ActionGraph",
    "build_node_set", "full_edge_mask", "same_agent_edge_mask",
    "node_inputs", "encode_nodes", "message_pass", "pool_contexts",
]


@dataclass(frozen=True)
class ActionNodeSet:
    """
    Canonical (agent-major, action-minor) list of action nodes.

    Attributes
    ----------
    nodes : Tuple[Tuple[int, int], ...]
        (agent i, action a) per node index.
    action_counts : Tuple[int, ...]
        |A_i| per agent.
    """
    nodes: Tuple[Tuple[int, int], ...]
    action_counts: Tuple[int, ...]
    _index: Dict[Tuple[int, int], int] = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        self._index.update({node: k for k, node in enumerate(self.nodes)})

    @property
    def size(self) -> int:
        return len(self.nodes)

    def __len__(self) -> int:
        return len(self.nodes)

    @property
    def num_agents(self) -> int:
        return len(self.action_counts)

    @property
    def max_actions(self) -> int:
        return max(self.action_counts)

    @property
    def uniform(self) -> bool:
        return len(set(self.action_counts)) == 1

    @property
    def agent_of(self) -> np.ndarray:
        return np.array([i for i, _ in self.nodes], dtype=np.int64)

    @property
    def action_of(self) -> np.ndarray:
        return np.array([a for _, a in self.nodes], dtype=np.int64)

    def node_index(self, agent: int, action: int) -> int:
        try:
            return self._index[(int(agent), int(action))]
        except KeyError:
            raise KeyError(f"no node for agent {agent}, action {action}") from None

    def node_at(self, k: int) -> Tuple[int, int]:
        return self.nodes[k]

    def node_mask(self, avail: np.ndarray) -> np.ndarray:
        """(..., N, A_max) per-agent availability -> (..., V) node availability."""
        avail = np.asarray(avail)
        if avail.shape[-2] != self.num_agents:
            raise ShapeMismatchError(f"avail has {avail.shape[-2]} agents, node set has {self.num_agents}")
        return avail[..., self.agent_of, self.action_of]

    def labels(self) -> List[str]:
        return [f"agent{i}-act{a}" for i, a in self.nodes]

    def __repr__(self) -> str:
        return f"<ActionNodeSet agents={self.num_agents} nodes={self.size}>"


def build_node_set(spec: Union[EnvSpec, Sequence[int]]) -> ActionNodeSet:
    """Global node set V = {(i, a)}; accepts an EnvSpec or an explicit list of |A_i|."""
    counts = tuple(int(c) for c in (spec.action_counts if isinstance(spec, EnvSpec) else spec))
    if not counts or min(counts) < 1:
        raise SpecValidationError(f"every agent needs at least one action, got {counts}", detail=counts)
    nodes = tuple((i, a) for i, count in enumerate(counts) for a in range(count))
    return ActionNodeSet(nodes=nodes, action_counts=counts)


def full_edge_mask(node_set: ActionNodeSet) -> np.ndarray:
    return np.ones((node_set.size, node_set.size), dtype=bool)


def same_agent_edge_mask(node_set: ActionNodeSet) -> np.ndarray:
    """Edges only between nodes of the same agent (no cross-agent dependencies)."""
    agent = node_set.agent_of
    return agent[:, None] == agent[None, :]


class GraphParams:
    """
    Parameters shared by every agent and node.

    Parameters
    ----------
    feature_dim : int
        Width of o_i (base observation plus optional agent one-hot).
    max_actions : int
        Width of the action one-hot.
    rng : np.random.Generator
        Initialization stream.
    hidden_dim, num_layers, num_heads : int
        d=64, L=2, H=4 by default; head width d/H.
    """

    def __init__(self, feature_dim: int, max_actions: int, rng: np.random.Generator, *,
                 hidden_dim: int = 64, num_layers: int = 2, num_heads: int = 4):
        if hidden_dim % num_heads != 0:
            raise ShapeMismatchError(f"hidden_dim {hidden_dim} not divisible by num_heads {num_heads}")
        self.feature_dim = int(feature_dim)
        self.max_actions = int(max_actions)
        self.hidden_dim = int(hidden_dim)
        self.num_layers = int(num_layers)
        self.num_heads = int(num_heads)
        d = self.hidden_dim
        self.encoder = MLP((self.feature_dim + self.max_actions, d, d), rng, name="graph.phi", final_relu=True)
        self.w_in = init_uniform(rng, d, (d, d), name="graph.W")
        self.layers: List[Dict[str, Tensor]] = []
        for layer in range(self.num_layers):
            self.layers.append({
                key: init_uniform(rng, d, (d, d), name=f"graph.L{layer}.{key}")
                for key in ("Wq", "Wk", "Wv", "Wo")
            })

    @property
    def head_dim(self) -> int:
        return self.hidden_dim // self.num_heads

    def parameters(self) -> List[Tensor]:
        out = list(self.encoder.parameters()) + [self.w_in]
        for layer in self.layers:
            out.extend(layer[key] for key in ("Wq", "Wk", "Wv", "Wo"))
        return out

    def __repr__(self) -> str:
        return (f"<GraphParams in={self.feature_dim}+{self.max_actions} d={self.hidden_dim} "
                f"L={self.num_layers} H={self.num_heads}>")


@dataclass
class AttentionRecord:
    """
    Attention weights of one forward pass.

    Attributes
    ----------
    weights : List[np.ndarray]
        Per layer, a (B, H, V, V) array; row (i,a) holds alpha_{(i,a),(j,b)} over columns.
    edge_mask : np.ndarray
        (V, V) edge mask used (full or same-agent).
    node_set : ActionNodeSet
    """
    weights: List[np.ndarray]
    edge_mask: np.ndarray
    node_set: ActionNodeSet

    @property
    def num_layers(self) -> int:
        return len(self.weights)

    @property
    def num_heads(self) -> int:
        return int(self.weights[0].shape[1]) if self.weights else 0

    def head(self, layer: int, head: int, batch_index: int = 0) -> np.ndarray:
        return self.weights[layer][batch_index, head]

    def batch_mean(self) -> List[np.ndarray]:
        """Per layer, (H, V, V) weights averaged over the batch axis."""
        return [w.mean(axis=0) for w in self.weights]


def node_inputs(features: np.ndarray, node_set: ActionNodeSet) -> np.ndarray:
    """(B, N, D) observations -> (B, V, D + A_max) rows concat(o_i, onehot(a))."""
    feats = np.asarray(features, dtype=np.float64)
    if feats.ndim != 3 or feats.shape[1] != node_set.num_agents:
        raise ShapeMismatchError(f"features must be (B, {node_set.num_agents}, D), got {feats.shape}")
    onehot = np.eye(node_set.max_actions)[node_set.action_of]          # (V, A)
    obs_rows = feats[:, node_set.agent_of, :]                         # (B, V, D)
    onehot = np.broadcast_to(onehot, (feats.shape[0],) + onehot.shape)
    return np.concatenate([obs_rows, onehot], axis=-1)


def encode_nodes(features: np.ndarray, node_set: ActionNodeSet, params: GraphParams) -> Tensor:
    """x_a^i = phi(concat(o_i, onehot(a))) for every node; (B, V, d)."""
    inputs = node_inputs(features, node_set)
    if inputs.shape[-1] != params.feature_dim + params.max_actions:
        raise ShapeMismatchError(
            f"node input width {inputs.shape[-1]} != encoder width {params.feature_dim + params.max_actions}",
            detail={"left": inputs.shape, "right": (params.feature_dim + params.max_actions,)})
    return params.encoder(Tensor(inputs))


def _attention_mask(node_set: ActionNodeSet, avail: np.ndarray, edge_mask: np.ndarray) -> np.ndarray:
    node_avail = node_set.node_mask(avail).astype(bool)                # (B, V)
    allowed = edge_mask[None, :, :] & node_avail[:, None, :]           # (B, V, V)
    allowed = allowed | np.eye(node_set.size, dtype=bool)[None]
    return allowed[:, None, :, :]                                      # (B, 1, V, V)


def _split_heads(t: Tensor, heads: int) -> Tensor:
    b, v, d = t.shape
    return transpose(reshape(t, (b, v, heads, d // heads)), (0, 2, 1, 3))


def _merge_heads(t: Tensor) -> Tensor:
    b, h, v, dh = t.shape
    return reshape(transpose(t, (0, 2, 1, 3)), (b, v, h * dh))


def message_pass(x: Tensor, node_set: ActionNodeSet, avail: np.ndarray, edge_mask: np.ndarray,
                 params: GraphParams) -> Tuple[Tensor, AttentionRecord]:
    """
    Project node features and run L residual multi-head attention layers.

    Per layer and head: scores = q k^T / sqrt(d/H), masked softmax over columns that
    are available and edge-connected (self always allowed), values averaged with
    those weights; heads are concatenated, output-projected and added to the layer input.

    Returns
    -------
    (h, record)
        h: (B, V, d) final node states; record: every layer's (B, H, V, V) weights.
    """
    if x.ndim != 3 or x.shape[1] != node_set.size:
        raise ShapeMismatchError(f"x must be (B, {node_set.size}, d), got {x.shape}")
    if edge_mask.shape != (node_set.size, node_set.size):
        raise ShapeMismatchError(f"edge mask {edge_mask.shape} does not match {node_set.size} nodes")
    mask = _attention_mask(node_set, avail, edge_mask.astype(bool))
    if not mask.any(axis=-1).all():
        raise AllMaskedError("an action node has no attention target")
    heads = params.num_heads
    inv_sqrt = 1.0 / math.sqrt(params.head_dim)
    z = matmul(x, params.w_in)
    weights: List[np.ndarray] = []
    for layer in params.layers:
        q = _split_heads(matmul(z, layer["Wq"]), heads)
        k = _split_heads(matmul(z, layer["Wk"]), heads)
        v = _split_heads(matmul(z, layer["Wv"]), heads)
        scores = scale(matmul(q, transpose(k, (0, 1, 3, 2))), inv_sqrt)
        alpha = masked_softmax(scores, mask)
        weights.append(alpha.values.copy())
        out = matmul(_merge_heads(matmul(alpha, v)), layer["Wo"])
        z = add(z, out)
    return z, AttentionRecord(weights=weights, edge_mask=edge_mask.astype(bool), node_set=node_set)


def pool_contexts(h: Tensor, node_set: ActionNodeSet, avail: np.ndarray) -> Tensor:
    """
    kappa_i = masked mean of agent i's node rows under its availability mask; (B, N, d).

    All-masked agents get the zero vector.
    """
    b, v, d = h.shape
    if v != node_set.size:
        raise ShapeMismatchError(f"h has {v} rows, node set has {node_set.size}")
    avail = np.asarray(avail)
    if node_set.uniform:
        a = node_set.action_counts[0]
        rows = reshape(h, (b, node_set.num_agents, a, d))
        return masked_mean(rows, avail[..., :a])
    # ragged action counts: same masked mean written as a pooling matrix
    node_avail = node_set.node_mask(avail).astype(np.float64)                      # (B, V)
    member = (node_set.agent_of[None, :] == np.arange(node_set.num_agents)[:, None]).astype(np.float64)
    weights = member[None, :, :] * node_avail[:, None, :]                          # (B, N, V)
    weights = weights / np.maximum(weights.sum(axis=-1, keepdims=True), 1.0)
    return matmul(Tensor(weights), h)


class ActionGraph:
    """
    Node set, shared parameters and edge mask bundled into one module.

    Parameters
    ----------
    spec : EnvSpec
        Game whose agents/actions define the node set.
    rng : np.random.Generator
        Initialization stream.
    cross_agent : bool
        False selects the same-agent edge mask (no cross-agent dependencies).
    """

    def __init__(self, spec: EnvSpec, rng: np.random.Generator, *, hidden_dim: int = 64,
                 num_layers: int = 2, num_heads: int = 4, cross_agent: bool = True):
        self.node_set = build_node_set(spec)
        self.params = GraphParams(spec.feature_dim, self.node_set.max_actions, rng,
                                  hidden_dim=hidden_dim, num_layers=num_layers, num_heads=num_heads)
        self.cross_agent = bool(cross_agent)
        self.edge_mask = full_edge_mask(self.node_set) if cross_agent else same_agent_edge_mask(self.node_set)

    @property
    def hidden_dim(self) -> int:
        return self.params.hidden_dim

    def contexts(self, features: np.ndarray, avail: np.ndarray) -> Tuple[Tensor, AttentionRecord]:
        """(B, N, D) features and (B, N, A) masks -> (kappa (B, N, d), attention record)."""
        x = encode_nodes(features, self.node_set, self.params)
        h, record = message_pass(x, self.node_set, avail, self.edge_mask, self.params)
        return pool_contexts(h, self.node_set, avail), record

    def parameters(self) -> List[Tensor]:
        return self.params.parameters()

    def __repr__(self) -> str:
        return f"<ActionGraph {self.node_set!r} cross_agent={self.cross_agent} {self.params!r}>"
