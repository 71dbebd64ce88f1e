"""
actiongraphpy.training
----------------------

Experience collection, replay, TD / clipped policy-gradient updates, target
networks, epsilon scheduling, greedy evaluation and the per-seed experiment loop.

Features
- `ReplayBuffer`: ring buffer, oldest-first eviction, uniform sampling with replacement.
- `td_update`: MSE between mixed chosen-action values and r + gamma * (1 - done) * max Q'.
  IQL regresses every agent's value on its own target; the other value kinds regress Q_tot.
- `pg_update`: clipped-ratio surrogate on the joint log-probability with a running-mean
  baseline (AGP_PG only).
- `run_experiment`: collect -> update (after one batch of warmup) -> target sync ->
  periodic greedy evaluation, fully determined by the seed.

Randomness
- One master seed expands into named streams (`utils.SeedStreams`): env resets, network
  init, epsilon / policy draws, replay sampling and evaluation (one substream per
  evaluation call), so adding evaluations never perturbs training.
"""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field
from typing import *

import numpy as np
from tqdm import tqdm

from .agents import Agent, joint_log_prob, mix_joint_q
from .environments import CoordinationGame, Observation, score_joint_action
from .exceptions import EmptyBatchError, EvaluationError, KindMismatchError, SpecValidationError
from .tensor import Adam, Tensor, Tape, backward, clip, exp, gather, mean, minimum, mul, sub
from .types_models import AgentKind, CurvePoint, LearningCurve, TrainConfig
from .utils import SeedStreams

logger = logging.getLogger(__name__)

__all__ = [
    "Transition", "ReplayBuffer", "RunningBaseline", "TrainingResult",
    "collect_episode", "td_update", "pg_update", "sync_target", "epsilon_at",
    "evaluate", "train", "run_experiment",
]

EVAL_CHUNK = 1000


@dataclass
class Transition:
    """
    One collected step.

    `next_features` / `next_avail` stay None for terminal steps (every built-in game);
    they exist so the bootstrapped target can be exercised on multi-step chains.
    `log_prob` is the behaviour policy's joint log-probability (AGP_PG only).
    """
    features: np.ndarray
    avail: np.ndarray
    actions: np.ndarray
    reward: float
    done: bool = True
    success: bool = False
    next_features: Optional[np.ndarray] = None
    next_avail: Optional[np.ndarray] = None
    log_prob: Optional[float] = None

    @property
    def num_agents(self) -> int:
        return int(self.actions.shape[0])


class ReplayBuffer:
    """
    Fixed-capacity ring of transitions.

    Parameters
    ----------
    capacity : int
        Maximum size (50,000 by default in TrainConfig).
    """

    def __init__(self, capacity: int):
        if capacity < 1:
            raise SpecValidationError(f"replay capacity must be positive, got {capacity}", detail=capacity)
        self.capacity = int(capacity)
        self._items: List[Transition] = []
        self._next = 0
        self.total_added = 0

    def __len__(self) -> int:
        return len(self._items)

    def add(self, transition: Transition) -> None:
        if len(self._items) < self.capacity:
            self._items.append(transition)
        else:
            self._items[self._next] = transition
        self._next = (self._next + 1) % self.capacity
        self.total_added += 1

    def sample(self, batch_size: int, rng: np.random.Generator) -> List[Transition]:
        """Uniform draw with replacement."""
        if not self._items:
            raise EmptyBatchError("cannot sample from an empty replay buffer")
        idx = rng.integers(0, len(self._items), size=int(batch_size))
        return [self._items[i] for i in idx]

    def __iter__(self) -> Iterator[Transition]:
        return iter(list(self._items))

    def __repr__(self) -> str:
        return f"<ReplayBuffer size={len(self)}/{self.capacity}>"


@dataclass
class RunningBaseline:
    """Exponential running mean of rewards, b <- decay * b + (1 - decay) * mean(r)."""
    decay: float = 0.99
    value: float = 0.0

    def update(self, rewards: np.ndarray) -> float:
        self.value = self.decay * self.value + (1.0 - self.decay) * float(np.mean(rewards))
        return self.value


@dataclass
class TrainingResult:
    curve: LearningCurve
    agent: Agent
    episodes: int = 0
    updates: int = 0
    wall_time: float = 0.0


def _stack(batch: Sequence[Transition]) -> Tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    if not batch:
        raise EmptyBatchError("update called with an empty batch")
    features = np.stack([t.features for t in batch])
    avail = np.stack([t.avail for t in batch])
    actions = np.stack([np.asarray(t.actions, dtype=np.int64) for t in batch])
    rewards = np.array([t.reward for t in batch], dtype=np.float64)
    return features, avail, actions, rewards


def collect_episode(env: CoordinationGame, agent: Agent, epsilon: float, rng: np.random.Generator, *,
                    explore_rng: Optional[np.random.Generator] = None, sample: bool = False,
                    buffer: Optional[ReplayBuffer] = None) -> Transition:
    """
    One reset -> select -> step cycle.

    `rng` drives the reset; `explore_rng` (default: `rng`) drives epsilon or policy draws.
    The transition is appended to `buffer` when one is given.
    """
    obs = env.reset(rng)
    actions, log_prob = agent.act_with_log_prob(obs, explore_rng if explore_rng is not None else rng,
                                                epsilon=epsilon, sample=sample)
    result = env.step(actions)
    transition = Transition(features=obs.features, avail=obs.avail, actions=actions, reward=result.reward,
                            done=result.done, success=result.success, log_prob=log_prob)
    if buffer is not None:
        buffer.add(transition)
    return transition


def _bootstrap(batch: Sequence[Transition], target_agent: Agent, gamma: float, per_agent: bool) -> np.ndarray:
    """Per-item gamma * max Q' (summed over agents unless per_agent) for non-terminal transitions."""
    n = batch[0].num_agents
    extra = np.zeros((len(batch), n) if per_agent else (len(batch),))
    live = [i for i, t in enumerate(batch) if not t.done and t.next_features is not None]
    if not live or gamma == 0.0:
        return extra
    nf = np.stack([batch[i].next_features for i in live])
    na = np.stack([batch[i].next_avail if batch[i].next_avail is not None else np.ones_like(batch[i].avail)
                   for i in live])
    q_next, _ = target_agent.scores(nf, na)
    best = np.where(na != 0, q_next.values, -np.inf).max(axis=-1)
    extra[live] = gamma * (best if per_agent else best.sum(axis=-1))
    return extra


def td_update(batch: Sequence[Transition], agent: Agent, target_agent: Agent, optimizer: Adam,
              gamma: float = 0.99) -> float:
    """
    One TD step.

    Parameters
    ----------
    batch : Sequence[Transition]
        Sampled transitions (nonempty).
    agent, target_agent : Agent
        Online network (updated) and frozen target network (bootstrap only).
    optimizer : Adam
        Optimizer over `agent.parameters()`.
    gamma : float
        Discount; irrelevant for terminal transitions.

    Returns
    -------
    float
        Mean squared TD error before the step.

    Raises
    ------
    EmptyBatchError
        `batch` is empty.
    KindMismatchError
        `agent` is not value-based.
    """
    if not agent.kind.is_value_based:
        raise KindMismatchError(f"td_update needs a value-based agent, got {agent.kind.value}")
    features, avail, actions, rewards = _stack(batch)
    per_agent = agent.kind is AgentKind.IQL
    targets = (rewards[:, None] if per_agent else rewards) + _bootstrap(batch, target_agent, gamma, per_agent)

    with Tape() as tape:
        q, _ = agent.scores(features, avail)
        predicted = mix_joint_q(gather(q, actions), agent.kind)
        err = sub(predicted, Tensor(targets))
        loss = mean(mul(err, err))
        backward(loss, tape)
    optimizer.step()
    return loss.item()


def pg_update(batch: Sequence[Transition], agent: Agent, optimizer: Adam,
              baseline: Optional[RunningBaseline] = None, *, clip_ratio: float = 0.2, epochs: int = 1) -> float:
    """
    Clipped-ratio policy-gradient step(s) on an on-policy batch.

    ratio = exp(log pi(a|o) - log pi_old(a|o)) on the joint log-probability (sum of the
    per-agent terms); advantage = r - baseline. The baseline moves after the last step.

    Returns
    -------
    float
        Surrogate loss of the first inner epoch (before any step).

    Raises
    ------
    KindMismatchError
        `agent` is not AGP_PG.
    EmptyBatchError
        `batch` is empty.
    """
    if agent.kind is not AgentKind.AGP_PG:
        raise KindMismatchError(f"pg_update needs an AGP_PG agent, got {agent.kind.value}")
    features, avail, actions, rewards = _stack(batch)
    baseline = baseline if baseline is not None else RunningBaseline()
    advantage = Tensor(rewards - baseline.value)

    stored = [t.log_prob for t in batch]
    if any(lp is None for lp in stored):
        old = joint_log_prob(agent.log_probs(features, avail), actions).values.copy()
    else:
        old = np.array(stored, dtype=np.float64)

    first_loss: Optional[float] = None
    for _ in range(max(int(epochs), 1)):
        with Tape() as tape:
            logp = joint_log_prob(agent.log_probs(features, avail), actions)
            ratio = exp(sub(logp, Tensor(old)))
            surrogate = minimum(mul(ratio, advantage), mul(clip(ratio, 1.0 - clip_ratio, 1.0 + clip_ratio), advantage))
            loss = -mean(surrogate)
            backward(loss, tape)
        optimizer.step()
        if first_loss is None:
            first_loss = loss.item()
    baseline.update(rewards)
    return float(first_loss)


def sync_target(agent: Agent, target_agent: Agent) -> None:
    target_agent.load_state_dict(agent.state_dict())


def epsilon_at(episode: int, config: TrainConfig) -> float:
    """Linear epsilon_start -> epsilon_end over the first anneal_fraction of episodes, then flat."""
    anneal_end = config.anneal_fraction * config.episodes
    if anneal_end <= 0 or episode >= anneal_end:
        return float(config.epsilon_end)
    frac = max(episode, 0) / anneal_end
    return float(config.epsilon_start + frac * (config.epsilon_end - config.epsilon_start))


def evaluate(env: CoordinationGame, agent: Any, episodes: int, rng: np.random.Generator) -> Tuple[float, float]:
    """
    Greedy (epsilon=0) rollouts over `episodes` fresh resets.

    `agent` needs `greedy_actions(features, avail) -> (B, N)`. Resets happen on a clone of
    `env`, actions are computed in batches, and nothing is written to any buffer or
    parameter.

    Returns
    -------
    (mean_reward, success_rate)

    Raises
    ------
    EvaluationError
        `episodes` < 1.
    """
    if episodes < 1:
        raise EvaluationError(f"evaluation needs at least one episode, got {episodes}", detail=episodes)
    game = env.clone()
    spec = game.spec
    total_reward = 0.0
    successes = 0
    done = 0
    while done < episodes:
        chunk = min(EVAL_CHUNK, episodes - done)
        observations: List[Observation] = []
        hidden: List[Optional[int]] = []
        for _ in range(chunk):
            observations.append(game.reset(rng))
            hidden.append(game.hidden_state)
        features = np.stack([o.features for o in observations])
        avail = np.stack([o.avail for o in observations])
        actions = np.asarray(agent.greedy_actions(features, avail))
        for obs, s, a in zip(observations, hidden, actions):
            result = score_joint_action(spec, obs.signals, a, hidden_state=s)
            total_reward += result.reward
            successes += int(result.success)
        done += chunk
    return total_reward / episodes, successes / episodes


def train(config: TrainConfig, *, progress: bool = False) -> TrainingResult:
    """
    Full per-seed loop; returns the curve together with the trained agent.

    Value kinds: epsilon-greedy collection into the replay buffer, one TD update per
    episode once the buffer holds a batch, target sync every `target_update_interval`
    episodes. AGP_PG: sampled on-policy batches of `batch_size` episodes, `ppo_epochs`
    inner steps each.
    """
    config.validate()
    start = time.perf_counter()
    streams = SeedStreams(config.seed)
    kind = config.kind
    env = CoordinationGame(config.env)
    agent = Agent(kind, config.env, streams.generator("init"), hidden_dim=config.hidden_dim,
                  num_layers=config.num_layers, num_heads=config.num_heads)
    optimizer = Adam(agent.parameters(), lr=config.lr)
    target = agent.clone() if kind.is_value_based else None
    buffer = ReplayBuffer(config.buffer_capacity)
    baseline = RunningBaseline(config.baseline_decay)
    env_rng = streams.generator("env")
    explore_rng = streams.generator("explore")
    sample_rng = streams.generator("sample")
    curve = LearningCurve(method=kind, seed=config.seed)
    pending: List[Transition] = []
    updates = 0
    evals = 0

    bar = tqdm(range(1, config.episodes + 1), desc=f"{kind.value}/seed{config.seed}", unit="ep",
               ncols=80, disable=not progress)
    for episode in bar:
        is_pg = kind is AgentKind.AGP_PG
        eps = 0.0 if is_pg else epsilon_at(episode - 1, config)
        transition = collect_episode(env, agent, eps, env_rng, explore_rng=explore_rng, sample=is_pg)
        if is_pg:
            pending.append(transition)
            if len(pending) >= config.batch_size:
                pg_update(pending, agent, optimizer, baseline, clip_ratio=config.ppo_clip, epochs=config.ppo_epochs)
                pending = []
                updates += 1
        else:
            buffer.add(transition)
            if len(buffer) >= config.batch_size:
                td_update(buffer.sample(config.batch_size, sample_rng), agent, target, optimizer, config.gamma)
                updates += 1
            if episode % config.target_update_interval == 0:
                sync_target(agent, target)

        if episode % config.eval_interval == 0 or episode == config.episodes:
            mean_reward, success = evaluate(env, agent, config.eval_episodes, streams.generator("eval", evals))
            evals += 1
            curve.append(CurvePoint(episode=episode, mean_reward=mean_reward, success_rate=success, epsilon=eps))
            logger.info("%s seed=%d episode=%d reward=%.4f success=%.4f eps=%.3f",
                        kind.value, config.seed, episode, mean_reward, success, eps)
    return TrainingResult(curve=curve, agent=agent, episodes=config.episodes, updates=updates,
                          wall_time=time.perf_counter() - start)


def run_experiment(config: TrainConfig, *, progress: bool = False) -> LearningCurve:
    """Train one (method, seed) cell and return its learning curve."""
    return train(config, progress=progress).curve
