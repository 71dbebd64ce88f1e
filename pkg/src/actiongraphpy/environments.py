"""
actiongraphpy.environments
--------------------------

One-step cooperative coordination games behind a uniform reset/step interface.

Games
- topk            : agents observe u_i ~ U[0,1]; reward +1 iff exactly the K largest act, else -1.
- anticoord       : topk reward minus lambda for each pair i<j with |u_i-u_j| < eps and a_i=a_j=1.
- exactly_one     : null observations; reward 1 iff exactly one agent selects action 1.
- latent_matching : two agents, hidden s ~ U{0,1}; reward 1 iff a_1 = a_2 = s.
- mismatch_table  : two agents, fixed table (0,0)->3, (1,1)->2, off-diagonal -1.
- parity          : null observations; reward 1 iff the action sum is even.

Each game keeps its own reward scale ({-1,+1} for Top-K, {0,1} for the constructions).
The pure `step_*` functions are usable without an environment object; `CoordinationGame`
adds the reset/step episode protocol and optional one-hot agent-identity features.
"""

from __future__ import annotations

import copy
import logging
from dataclasses import dataclass, field
from itertools import combinations
from typing import *

import numpy as np

from .exceptions import ArityError, EpisodeError
from .types_models import EnvSpec, GameName, PenaltyMode

logger = logging.getLogger(__name__)

__all__ = [
    "Observation", "StepResult", "CoordinationGame", "make_env", "reset",
    "topk_target_set", "step_topk", "step_anticoord", "step_exactly_one",
    "step_latent_matching", "step_mismatch_table", "step_parity", "score_joint_action",
]

MISMATCH_TABLE: Dict[Tuple[int, int], float] = {(0, 0): 3.0, (1, 1): 2.0, (0, 1): -1.0, (1, 0): -1.0}


@dataclass
class Observation:
    """
    What the agents see after reset.

    Attributes
    ----------
    features : np.ndarray
        (N, feature_dim) per-agent vectors: base observation, then the optional one-hot agent id.
    avail : np.ndarray
        (N, |A|) binary availability masks (all ones for the built-ins).
    signals : np.ndarray
        (N,) raw u_i for the Top-K games, zeros otherwise.
    """
    features: np.ndarray
    avail: np.ndarray
    signals: np.ndarray

    @property
    def num_agents(self) -> int:
        return int(self.features.shape[0])

    def __repr__(self) -> str:
        return f"<Observation N={self.num_agents} dim={self.features.shape[1]}>"


@dataclass(frozen=True)
class StepResult:
    """Outcome of the single step: shared reward, done (always True), success flag, extras."""
    reward: float
    done: bool
    success: bool
    info: Dict[str, Any] = field(default_factory=dict)


def _joint(joint_action: Any, num_agents: Optional[int], num_actions: int = 2) -> np.ndarray:
    arr = np.asarray(joint_action)
    if arr.ndim != 1:
        raise ArityError(f"joint action must be a flat vector, got shape {arr.shape}")
    if num_agents is not None and arr.shape[0] != num_agents:
        raise ArityError(f"joint action has {arr.shape[0]} entries, expected {num_agents}",
                         detail={"expected": num_agents, "got": int(arr.shape[0])})
    if arr.size and (not np.all(np.equal(np.mod(arr, 1), 0)) or arr.min() < 0 or arr.max() >= num_actions):
        raise ArityError(f"joint action entries must be integers in [0, {num_actions}), got {arr.tolist()}")
    return arr.astype(np.int64)


def topk_target_set(signals: np.ndarray, k: int) -> FrozenSet[int]:
    """Indices of the K largest signals; ties go to the lowest agent index."""
    u = np.asarray(signals, dtype=np.float64)
    order = sorted(range(u.shape[0]), key=lambda i: (-u[i], i))
    return frozenset(order[:k])


def step_topk(signals: np.ndarray, joint_action: Any, k: int) -> StepResult:
    """
    Reward +1 iff the set of agents choosing action 1 equals the Top-K set, else -1.
    """
    u = np.asarray(signals, dtype=np.float64)
    a = _joint(joint_action, u.shape[0])
    chosen = frozenset(int(i) for i in np.flatnonzero(a == 1))
    success = chosen == topk_target_set(u, k)
    return StepResult(reward=1.0 if success else -1.0, done=True, success=success)


def step_anticoord(signals: np.ndarray, joint_action: Any, k: int, epsilon_penalty: float,
                   penalty_lambda: float, mode: PenaltyMode = PenaltyMode.PER_PAIR) -> StepResult:
    """
    Top-K reward minus the anti-coordination penalty.

    A pair i<j violates when |u_i - u_j| < epsilon_penalty and both select action 1.
    PER_PAIR charges lambda per violating pair; FLAT charges lambda once if any pair
    violates. Success uses the Top-K predicate only. `info["violations"]` holds the
    violating-pair count.
    """
    base = step_topk(signals, joint_action, k)
    u = np.asarray(signals, dtype=np.float64)
    a = np.asarray(joint_action, dtype=np.int64)
    active = np.flatnonzero(a == 1)
    violations = sum(1 for i, j in combinations(active, 2) if abs(u[i] - u[j]) < epsilon_penalty)
    charged = violations if PenaltyMode(mode) is PenaltyMode.PER_PAIR else min(violations, 1)
    return StepResult(reward=base.reward - penalty_lambda * charged, done=True, success=base.success,
                      info={"violations": int(violations)})


def step_exactly_one(joint_action: Any, num_agents: Optional[int] = None) -> StepResult:
    a = _joint(joint_action, num_agents)
    success = int(a.sum()) == 1
    return StepResult(reward=1.0 if success else 0.0, done=True, success=success)


def step_latent_matching(joint_action: Any, hidden_s: int) -> StepResult:
    a = _joint(joint_action, 2)
    success = int(a[0]) == int(a[1]) == int(hidden_s)
    return StepResult(reward=1.0 if success else 0.0, done=True, success=success)


def step_mismatch_table(joint_action: Any) -> StepResult:
    a = _joint(joint_action, 2)
    key = (int(a[0]), int(a[1]))
    return StepResult(reward=MISMATCH_TABLE[key], done=True, success=key == (0, 0))


def step_parity(joint_action: Any, num_agents: Optional[int] = None) -> StepResult:
    a = _joint(joint_action, num_agents)
    success = int(a.sum()) % 2 == 0
    return StepResult(reward=1.0 if success else 0.0, done=True, success=success)


def score_joint_action(spec: EnvSpec, signals: np.ndarray, joint_action: Any, *,
                       hidden_state: Optional[int] = None) -> StepResult:
    """
    Reward of one joint action under `spec`, given the reset's signals (Top-K games) or
    hidden state (latent_matching). Pure; used for batched evaluation.
    """
    a = _joint(joint_action, int(spec.num_agents), spec.num_actions)
    game = spec.game
    if game is GameName.TOPK:
        return step_topk(signals, a, spec.top_k)
    if game is GameName.ANTICOORD:
        return step_anticoord(signals, a, spec.top_k, spec.epsilon_penalty, spec.penalty_lambda, spec.penalty_mode)
    if game is GameName.EXACTLY_ONE:
        return step_exactly_one(a)
    if game is GameName.LATENT_MATCHING:
        if hidden_state is None:
            raise EpisodeError("latent_matching needs the hidden state of the reset")
        return step_latent_matching(a, hidden_state)
    if game is GameName.MISMATCH_TABLE:
        return step_mismatch_table(a)
    return step_parity(a)


class CoordinationGame:
    """
    Uniform reset/step wrapper around one EnvSpec.

    Value-semantic: `clone()` gives an independent copy, and all randomness comes from
    the generator passed to `reset`, so parallel instances never interfere.

    Example
    -------
    >>> env = CoordinationGame(EnvSpec(game=GameName.TOPK, num_agents=6, top_k=2))
    >>> obs = env.reset(np.random.default_rng(0))
    >>> result = env.step([1, 1, 0, 0, 0, 0])
    """

    def __init__(self, spec: EnvSpec):
        self.spec = spec.validate()
        self._obs: Optional[Observation] = None
        self._hidden: Optional[int] = None
        self._id_block = np.eye(int(spec.num_agents)) if spec.use_agent_ids else None

    @property
    def num_agents(self) -> int:
        return int(self.spec.num_agents)

    @property
    def num_actions(self) -> int:
        return int(self.spec.num_actions)

    @property
    def observation(self) -> Optional[Observation]:
        return self._obs

    @property
    def hidden_state(self) -> Optional[int]:
        """Latent s of latent_matching (None for every other game)."""
        return self._hidden

    def reset(self, rng: np.random.Generator) -> Observation:
        spec = self.spec
        n = self.num_agents
        base = np.zeros((n, spec.obs_dim))
        signals = np.zeros(n)
        self._hidden = None
        if spec.game.is_topk:
            signals = rng.uniform(0.0, 1.0, size=n)
            base[:, 0] = signals
        elif spec.game is GameName.LATENT_MATCHING:
            self._hidden = int(rng.integers(0, 2))
        features = base if self._id_block is None else np.concatenate([base, self._id_block], axis=1)
        self._obs = Observation(features=features, avail=np.ones((n, self.num_actions), dtype=np.int8),
                                signals=signals)
        return self._obs

    def evaluate(self, joint_action: Any, *, hidden_state: Optional[int] = None) -> StepResult:
        """Reward of `joint_action` against the current observation, without ending the episode."""
        if self._obs is None:
            raise EpisodeError("no active episode; call reset() first")
        s = self._hidden if hidden_state is None else int(hidden_state)
        return score_joint_action(self.spec, self._obs.signals, joint_action, hidden_state=s)

    def step(self, joint_action: Any) -> StepResult:
        """Apply the joint action; the episode ends immediately (done is always True)."""
        result = self.evaluate(joint_action)
        self._obs = None
        return result

    def clone(self) -> "CoordinationGame":
        return copy.deepcopy(self)

    def __repr__(self) -> str:
        return f"<CoordinationGame {self.spec!r}>"


def make_env(spec: EnvSpec) -> CoordinationGame:
    return CoordinationGame(spec)


def reset(spec: EnvSpec, rng: np.random.Generator) -> Observation:
    """Functional form: fresh game, one reset."""
    return CoordinationGame(spec).reset(rng)
