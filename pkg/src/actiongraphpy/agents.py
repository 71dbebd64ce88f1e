"""
actiongraphpy.agents
--------------------

Policy heads, action selection and the six learner kinds.

- AGP_Q        : action graph -> kappa_i -> shared Q-head on concat(o_i, kappa_i)
- AGP_NO_CROSS : AGP_Q with the same-agent edge mask
- AGP_NO_GRAPH : AGP Q-head with kappa_i replaced by the zero vector
- AGP_PG       : action graph -> kappa_i -> shared policy head (logits) + masked softmax
- IQL / VDN    : shared Q-head on o_i alone; IQL keeps per-agent targets, VDN sums

Value-based kinds other than IQL combine per-agent chosen-action values additively into
Q_tot so the TD machinery is identical across AGP_Q, VDN and the ablations.
"""

from __future__ import annotations

import copy
import logging
from typing import *

import numpy as np

from .action_graph import ActionGraph, AttentionRecord
from .environments import Observation
from .exceptions import AllMaskedError, ShapeMismatchError, KindMismatchError, SpecValidationError
from .tensor import Tensor, MLP, concat, gather, tsum, masked_softmax, masked_log_softmax
from .types_models import AgentKind, EnvSpec

logger = logging.getLogger(__name__)

__all__ = [
    "AgentKind", "Agent", "q_values", "select_actions", "sample_actions", "mix_joint_q",
    "policy_distribution", "policy_log_probs", "joint_log_prob",
]


def _head_input(features: np.ndarray, contexts: Optional[Tensor]) -> Tensor:
    obs = Tensor(np.asarray(features, dtype=np.float64))
    if contexts is None:
        return obs
    if contexts.shape[:-1] != obs.shape[:-1]:
        raise ShapeMismatchError(f"contexts {contexts.shape} do not match observations {obs.shape}")
    return concat([obs, contexts], axis=-1)


def q_values(features: np.ndarray, contexts: Optional[Tensor], head: MLP) -> Tensor:
    """
    Q_i(o_i, kappa_i, .) for every agent with one shared head.

    Parameters
    ----------
    features : np.ndarray
        (B, N, D) observations.
    contexts : Optional[Tensor]
        (B, N, d) coordination contexts, or None for context-free heads (IQL / VDN).
    head : MLP
        Shared two-layer network emitting |A| scores.

    Returns
    -------
    Tensor
        (B, N, |A|) scores.
    """
    return head(_head_input(features, contexts))


def select_actions(scores: np.ndarray, avail: np.ndarray, epsilon: float = 0.0,
                   rng: Optional[np.random.Generator] = None) -> np.ndarray:
    """
    Epsilon-greedy over available actions, independently per agent.

    With probability 1-epsilon the available argmax (ties -> lowest index), otherwise a
    uniform draw over that agent's available actions. Masked actions are never chosen.

    Raises
    ------
    AllMaskedError
        Some agent has no available action.
    """
    s = np.asarray(scores, dtype=np.float64)
    m = np.asarray(avail) != 0
    if s.shape != m.shape:
        raise ShapeMismatchError(f"scores {s.shape} and avail {m.shape} differ")
    if not m.any(axis=-1).all():
        raise AllMaskedError("an agent has no available action")
    if not 0.0 <= epsilon <= 1.0:
        raise SpecValidationError(f"epsilon must lie in [0, 1], got {epsilon}", detail=epsilon)
    greedy = np.argmax(np.where(m, s, -np.inf), axis=-1)
    if epsilon == 0.0:
        return greedy.astype(np.int64)
    if rng is None:
        raise SpecValidationError("epsilon > 0 needs a random generator")
    explore = rng.random(greedy.shape) < epsilon
    # uniform over available: argmax of random keys restricted to the mask
    keys = np.where(m, rng.random(m.shape), -1.0)
    uniform = np.argmax(keys, axis=-1)
    return np.where(explore, uniform, greedy).astype(np.int64)


def sample_actions(probs: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """One categorical draw per agent from (..., N, A) probabilities."""
    p = np.asarray(probs, dtype=np.float64)
    cdf = np.cumsum(p, axis=-1)
    u = rng.random(p.shape[:-1] + (1,)) * cdf[..., -1:]
    picks = (u >= cdf).sum(axis=-1)
    # zero-probability actions sit on flat cdf steps and are skipped by construction
    return np.minimum(picks, p.shape[-1] - 1).astype(np.int64)


def mix_joint_q(chosen: Tensor, kind: AgentKind) -> Tensor:
    """
    Combine per-agent chosen-action values.

    IQL: per-agent passthrough (B, N); every other value-based kind: additive Q_tot (B,).
    """
    kind = AgentKind.parse(kind)
    if kind is AgentKind.AGP_PG:
        raise KindMismatchError("AGP_PG has no value mixer")
    if kind is AgentKind.IQL:
        return chosen
    return tsum(chosen, axis=-1)


def policy_distribution(features: np.ndarray, contexts: Optional[Tensor], head: MLP, avail: np.ndarray) -> Tensor:
    """pi_i(. | o_i, kappa_i) = masked softmax of the head's logits; (B, N, |A|)."""
    return masked_softmax(q_values(features, contexts, head), avail)


def policy_log_probs(features: np.ndarray, contexts: Optional[Tensor], head: MLP, avail: np.ndarray) -> Tensor:
    return masked_log_softmax(q_values(features, contexts, head), avail)


def joint_log_prob(log_probs: Tensor, actions: np.ndarray) -> Tensor:
    """log pi(a | o) = sum_i log pi_i(a_i | o_i, kappa_i); (B,)."""
    return tsum(gather(log_probs, actions), axis=-1)


class Agent:
    """
    One learner: optional action graph plus a shared head.

    Parameters
    ----------
    kind : AgentKind
        Learner family.
    spec : EnvSpec
        Game the agent plays (fixes N, |A| and the observation width).
    rng : np.random.Generator
        Initialization stream.
    hidden_dim, num_layers, num_heads : int
        Graph / head widths (d=64, L=2, H=4).

    Example
    -------
    >>> agent = Agent(AgentKind.AGP_Q, spec, np.random.default_rng(0))
    >>> joint_action = agent.act(obs, rng, epsilon=0.1)
    """

    def __init__(self, kind: AgentKind, spec: EnvSpec, rng: np.random.Generator, *,
                 hidden_dim: int = 64, num_layers: int = 2, num_heads: int = 4):
        self.kind = AgentKind.parse(kind)
        self.spec = spec
        self.hidden_dim = int(hidden_dim)
        self.num_layers = int(num_layers)
        self.num_heads = int(num_heads)
        self.graph: Optional[ActionGraph] = None
        if self.kind.uses_graph:
            self.graph = ActionGraph(spec, rng, hidden_dim=hidden_dim, num_layers=num_layers,
                                     num_heads=num_heads, cross_agent=self.kind is not AgentKind.AGP_NO_CROSS)
        context_dim = self.hidden_dim if self.kind.uses_context else 0
        self.head = MLP((spec.feature_dim + context_dim, self.hidden_dim, spec.num_actions), rng, name="head")

    @property
    def num_agents(self) -> int:
        return int(self.spec.num_agents)

    # forward
    def contexts(self, features: np.ndarray, avail: np.ndarray) -> Tuple[Optional[Tensor], Optional[AttentionRecord]]:
        """(B, N, D) -> kappa (B, N, d); zeros for AGP_NO_GRAPH, None for IQL / VDN."""
        if self.graph is not None:
            return self.graph.contexts(features, avail)
        if self.kind is AgentKind.AGP_NO_GRAPH:
            b, n = np.asarray(features).shape[:2]
            return Tensor(np.zeros((b, n, self.hidden_dim))), None
        return None, None

    def scores(self, features: np.ndarray, avail: np.ndarray) -> Tuple[Tensor, Optional[AttentionRecord]]:
        """Q-values (value kinds) or logits (AGP_PG); (B, N, |A|)."""
        kappa, record = self.contexts(features, avail)
        return q_values(features, kappa, self.head), record

    def log_probs(self, features: np.ndarray, avail: np.ndarray) -> Tensor:
        if self.kind is not AgentKind.AGP_PG:
            raise KindMismatchError(f"{self.kind.value} has no policy head")
        logits, _ = self.scores(features, avail)
        return masked_log_softmax(logits, avail)

    def greedy_actions(self, features: np.ndarray, avail: np.ndarray) -> np.ndarray:
        """Deterministic (epsilon=0) joint actions for a batch; (B, N, D) -> (B, N)."""
        scores, _ = self.scores(features, avail)
        return select_actions(scores.values, avail)

    def act(self, obs: Observation, rng: Optional[np.random.Generator] = None, *,
            epsilon: float = 0.0, sample: bool = False) -> np.ndarray:
        return self.act_with_log_prob(obs, rng, epsilon=epsilon, sample=sample)[0]

    def act_with_log_prob(self, obs: Observation, rng: Optional[np.random.Generator] = None, *,
                          epsilon: float = 0.0, sample: bool = False) -> Tuple[np.ndarray, Optional[float]]:
        """
        Decentralized action selection for one observation.

        Value kinds: epsilon-greedy on Q. AGP_PG: a draw from pi when `sample` is set,
        else the greedy action; the joint log-probability is returned for PG.
        """
        features = obs.features[None]
        avail = obs.avail[None]
        scores, _ = self.scores(features, avail)
        if self.kind is AgentKind.AGP_PG:
            logp = masked_log_softmax(scores, avail).values[0]
            if sample:
                if rng is None:
                    raise SpecValidationError("sampling needs a random generator")
                actions = sample_actions(np.where(obs.avail != 0, np.exp(logp), 0.0), rng)
            else:
                actions = select_actions(scores.values[0], obs.avail)
            return actions, float(logp[np.arange(actions.shape[0]), actions].sum())
        return select_actions(scores.values[0], obs.avail, epsilon, rng), None

    # parameters
    def named_parameters(self) -> Dict[str, Tensor]:
        params = list(self.graph.parameters()) if self.graph is not None else []
        params.extend(self.head.parameters())
        return {p.name: p for p in params}

    def parameters(self) -> List[Tensor]:
        return list(self.named_parameters().values())

    def state_dict(self) -> Dict[str, np.ndarray]:
        return {name: p.values.copy() for name, p in self.named_parameters().items()}

    def load_state_dict(self, state: Mapping[str, np.ndarray]) -> None:
        own = self.named_parameters()
        missing = set(own) - set(state)
        unexpected = set(state) - set(own)
        if missing or unexpected:
            raise ShapeMismatchError(f"state dict mismatch: missing={sorted(missing)} unexpected={sorted(unexpected)}")
        for name, p in own.items():
            value = np.asarray(state[name], dtype=np.float64)
            if value.shape != p.values.shape:
                raise ShapeMismatchError(f"{name}: shape {value.shape} != {p.values.shape}")
            p.values[...] = value

    def clone(self) -> "Agent":
        """Independent copy (target network)."""
        twin = copy.deepcopy(self)
        for p in twin.parameters():
            p.zero_grad()
        return twin

    def __repr__(self) -> str:
        return f"<Agent kind={self.kind.value} N={self.num_agents} graph={self.graph is not None}>"
