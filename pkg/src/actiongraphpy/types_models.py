"""
types_models.py

Typed dataclasses and enums shared by the environments, agents, training loop and
reporting layer.

Purpose
-------
- Provide typed, documented containers for game specs, training and experiment
  configuration, and learning curves.
- Supply `from_dict()` / `to_dict()` so configs and run manifests move between YAML,
  JSON and Python without ad-hoc dict handling.
- Validate invariants close to the data (`validate()`), raising SpecValidationError.

Notes
-----
- Defaults follow the training protocol used for the matrix games: Adam at 5e-4,
  gamma 0.99, batch 32, replay 50k, target sync every 200 episodes, N=6 / K=2.
"""

from __future__ import annotations
from dataclasses import dataclass, field, asdict, replace
from typing import Optional, List, Dict, Any
from enum import Enum

from .exceptions import SpecValidationError


# Enums
class GameName(str, Enum):
    """The six built-in one-step coordination games."""
    TOPK = "topk"
    ANTICOORD = "anticoord"
    EXACTLY_ONE = "exactly_one"
    LATENT_MATCHING = "latent_matching"
    MISMATCH_TABLE = "mismatch_table"
    PARITY = "parity"

    @property
    def is_topk(self) -> bool:
        return self in (GameName.TOPK, GameName.ANTICOORD)

    @property
    def two_agent_only(self) -> bool:
        return self in (GameName.LATENT_MATCHING, GameName.MISMATCH_TABLE)


class AgentKind(str, Enum):
    """
    Learner families.

    AGP_NO_CROSS is AGP_Q with the same-agent edge mask; AGP_NO_GRAPH is the AGP
    Q-head with every coordination context replaced by the zero vector.
    """
    AGP_Q = "AGP_Q"
    AGP_PG = "AGP_PG"
    IQL = "IQL"
    VDN = "VDN"
    AGP_NO_CROSS = "AGP_NO_CROSS"
    AGP_NO_GRAPH = "AGP_NO_GRAPH"

    @property
    def uses_graph(self) -> bool:
        return self in (AgentKind.AGP_Q, AgentKind.AGP_PG, AgentKind.AGP_NO_CROSS)

    @property
    def uses_context(self) -> bool:
        """Whether the head input includes a context slot (zeroed for AGP_NO_GRAPH)."""
        return self in (AgentKind.AGP_Q, AgentKind.AGP_PG, AgentKind.AGP_NO_CROSS, AgentKind.AGP_NO_GRAPH)

    @property
    def is_value_based(self) -> bool:
        return self is not AgentKind.AGP_PG

    @classmethod
    def parse(cls, value: Any) -> "AgentKind":
        if isinstance(value, cls):
            return value
        try:
            return cls(str(value).strip().upper())
        except ValueError:
            raise SpecValidationError(
                f"Unknown agent kind {value!r}; expected one of {[k.value for k in cls]}"
            ) from None


class PenaltyMode(str, Enum):
    """Anti-coordination penalty: one lambda per violating pair, or one flat lambda if any pair violates."""
    PER_PAIR = "per_pair"
    FLAT = "flat"


# Game spec
@dataclass
class EnvSpec:
    """
    Static description of one coordination game.

    Attributes
    ----------
    game : GameName
        Which built-in game.
    num_agents : int
        N. Defaults to 6, or 2 for the two-agent constructions.
    num_actions : int
        |A_i| (identical for every agent; 2 for all built-ins).
    obs_dim : int
        Length of the base observation vector (u_i for Top-K; zeros otherwise).
    top_k : int
        K for the Top-K games.
    epsilon_penalty : float
        Closeness threshold of the anti-coordination penalty.
    penalty_lambda : float
        Penalty magnitude lambda.
    penalty_mode : PenaltyMode
        Per violating pair (default) or flat.
    agent_ids : Optional[bool]
        Append a one-hot agent index to each observation. None = game default
        (on for exactly_one and latent_matching, off otherwise).
    """
    game: GameName = GameName.TOPK
    num_agents: Optional[int] = None
    num_actions: int = 2
    obs_dim: int = 1
    top_k: int = 2
    epsilon_penalty: float = 0.1
    penalty_lambda: float = 0.5
    penalty_mode: PenaltyMode = PenaltyMode.PER_PAIR
    agent_ids: Optional[bool] = None

    def __post_init__(self):
        self.game = GameName(self.game)
        self.penalty_mode = PenaltyMode(self.penalty_mode)
        if self.num_agents is None:
            self.num_agents = 2 if self.game.two_agent_only else 6

    @property
    def use_agent_ids(self) -> bool:
        if self.agent_ids is None:
            return self.game in (GameName.EXACTLY_ONE, GameName.LATENT_MATCHING)
        return bool(self.agent_ids)

    @property
    def feature_dim(self) -> int:
        """Width of the per-agent observation vector actually emitted."""
        return self.obs_dim + (self.num_agents if self.use_agent_ids else 0)

    @property
    def action_counts(self) -> List[int]:
        return [self.num_actions] * int(self.num_agents)

    def validate(self) -> "EnvSpec":
        n = int(self.num_agents)
        if n < 1:
            raise SpecValidationError(f"N must be positive, got {n}", detail={"field": "N"})
        if self.num_actions < 1:
            raise SpecValidationError(f"num_actions must be positive, got {self.num_actions}",
                                      detail={"field": "num_actions"})
        if self.obs_dim < 0:
            raise SpecValidationError(f"obs_dim must be non-negative, got {self.obs_dim}",
                                      detail={"field": "obs_dim"})
        if self.game.is_topk:
            if not 1 <= self.top_k <= n:
                raise SpecValidationError(f"K <= N violated: K={self.top_k}, N={n} (need 1 <= K <= N)",
                                          detail={"field": "K"})
            if self.obs_dim < 1:
                raise SpecValidationError("Top-K games need obs_dim >= 1 to carry u_i", detail={"field": "obs_dim"})
        if self.game is GameName.ANTICOORD:
            if not self.epsilon_penalty > 0:
                raise SpecValidationError(f"epsilon_penalty must be > 0, got {self.epsilon_penalty}",
                                          detail={"field": "epsilon_penalty"})
            if self.penalty_lambda < 0:
                raise SpecValidationError(f"penalty_lambda must be >= 0, got {self.penalty_lambda}",
                                          detail={"field": "penalty_lambda"})
        if self.game.two_agent_only and n != 2:
            raise SpecValidationError(f"{self.game.value} is a two-agent game, got N={n}", detail={"field": "N"})
        if self.game is not GameName.TOPK and self.game is not GameName.ANTICOORD and self.num_actions != 2:
            raise SpecValidationError(f"{self.game.value} is defined for binary actions only",
                                      detail={"field": "num_actions"})
        if self.game.is_topk and self.num_actions != 2:
            raise SpecValidationError("Top-K games are defined for binary actions only",
                                      detail={"field": "num_actions"})
        return self

    @classmethod
    def from_dict(cls, d: Dict[str, Any]) -> "EnvSpec":
        d = d or {}
        return cls(
            game=GameName(d.get("game", GameName.TOPK.value)),
            num_agents=d.get("num_agents"),
            num_actions=int(d.get("num_actions", 2)),
            obs_dim=int(d.get("obs_dim", 1)),
            top_k=int(d.get("top_k", 2)),
            epsilon_penalty=float(d.get("epsilon_penalty", 0.1)),
            penalty_lambda=float(d.get("penalty_lambda", 0.5)),
            penalty_mode=PenaltyMode(d.get("penalty_mode", PenaltyMode.PER_PAIR.value)),
            agent_ids=d.get("agent_ids"),
        )

    def to_dict(self) -> Dict[str, Any]:
        out = asdict(self)
        out["game"] = self.game.value
        out["penalty_mode"] = self.penalty_mode.value
        return out

    def __repr__(self) -> str:
        return f"<EnvSpec game={self.game.value} N={self.num_agents} K={self.top_k} ids={self.use_agent_ids}>"


# Training configuration
@dataclass
class TrainConfig:
    """
    Everything one (method, seed) training run needs.

    Attributes mirror the matrix-game protocol: Adam lr 5e-4, gamma 0.99, batch 32,
    replay capacity 50,000, target sync every 200 episodes, linear epsilon 1.0 -> 0.05
    over the first 20% of episodes, greedy evaluation over `eval_episodes` resets every
    `eval_interval` episodes.
    """
    env: EnvSpec = field(default_factory=EnvSpec)
    kind: AgentKind = AgentKind.AGP_Q
    lr: float = 5e-4
    gamma: float = 0.99
    batch_size: int = 32
    buffer_capacity: int = 50_000
    target_update_interval: int = 200
    episodes: int = 300_000
    epsilon_start: float = 1.0
    epsilon_end: float = 0.05
    anneal_fraction: float = 0.2
    eval_interval: int = 10_000
    eval_episodes: int = 1_000
    seed: int = 0
    hidden_dim: int = 64
    num_layers: int = 2
    num_heads: int = 4
    ppo_clip: float = 0.2
    ppo_epochs: int = 4
    baseline_decay: float = 0.99

    def __post_init__(self):
        self.kind = AgentKind.parse(self.kind)
        if isinstance(self.env, dict):
            self.env = EnvSpec.from_dict(self.env)

    def validate(self) -> "TrainConfig":
        self.env.validate()
        positive = {
            "lr": self.lr, "batch_size": self.batch_size, "buffer_capacity": self.buffer_capacity,
            "target_update_interval": self.target_update_interval, "eval_interval": self.eval_interval,
            "eval_episodes": self.eval_episodes, "hidden_dim": self.hidden_dim, "num_heads": self.num_heads,
            "ppo_epochs": self.ppo_epochs,
        }
        for name, value in positive.items():
            if not value > 0:
                raise SpecValidationError(f"{name} must be positive, got {value}", detail={"field": name})
        if self.episodes < 0:
            raise SpecValidationError(f"episodes must be >= 0, got {self.episodes}", detail={"field": "episodes"})
        if self.num_layers < 0:
            raise SpecValidationError(f"num_layers must be >= 0, got {self.num_layers}", detail={"field": "num_layers"})
        if not 0.0 < self.anneal_fraction <= 1.0:
            raise SpecValidationError(f"anneal_fraction must lie in (0, 1], got {self.anneal_fraction}",
                                      detail={"field": "anneal_fraction"})
        if not 0.0 <= self.gamma <= 1.0:
            raise SpecValidationError(f"gamma must lie in [0, 1], got {self.gamma}", detail={"field": "gamma"})
        for name in ("epsilon_start", "epsilon_end"):
            value = getattr(self, name)
            if not 0.0 <= value <= 1.0:
                raise SpecValidationError(f"{name} must lie in [0, 1], got {value}", detail={"field": name})
        if self.hidden_dim % self.num_heads != 0:
            raise SpecValidationError(
                f"hidden_dim ({self.hidden_dim}) must be divisible by num_heads ({self.num_heads})",
                detail={"field": "num_heads"})
        if not 0.0 < self.ppo_clip < 1.0:
            raise SpecValidationError(f"ppo_clip must lie in (0, 1), got {self.ppo_clip}", detail={"field": "ppo_clip"})
        if not 0.0 <= self.baseline_decay < 1.0:
            raise SpecValidationError(f"baseline_decay must lie in [0, 1), got {self.baseline_decay}",
                                      detail={"field": "baseline_decay"})
        return self

    def with_run(self, kind: AgentKind, seed: int) -> "TrainConfig":
        """Copy of this config for one (method, seed) cell."""
        return replace(self, kind=AgentKind.parse(kind), seed=int(seed), env=replace(self.env))

    @classmethod
    def from_dict(cls, d: Dict[str, Any]) -> "TrainConfig":
        d = dict(d or {})
        env = EnvSpec.from_dict(d.pop("env", {}) or {})
        known = {f for f in cls.__dataclass_fields__ if f != "env"}
        kwargs = {k: v for k, v in d.items() if k in known}
        return cls(env=env, **kwargs)

    def to_dict(self) -> Dict[str, Any]:
        out = asdict(self)
        out["env"] = self.env.to_dict()
        out["kind"] = self.kind.value
        return out


@dataclass
class ExperimentConfig:
    """
    A suite: every method in `methods` trained once per seed in `seeds`.

    Attributes
    ----------
    train : TrainConfig
        Template; `kind` and `seed` are overwritten per cell.
    methods : List[AgentKind]
        Learners to compare.
    seeds : List[int]
        Five seeds by default.
    output_dir : str
        Root of `<method>/<seed>/curve.csv`, `aggregate.csv`, heatmaps and manifest.
    heatmaps : bool
        Export attention heatmaps for graph-based methods at the end of each run.
    heatmap_batch : int
        Evaluation resets averaged per exported heatmap.
    workers : int
        Parallel (method, seed) cells.
    """
    train: TrainConfig = field(default_factory=TrainConfig)
    methods: List[AgentKind] = field(default_factory=lambda: [AgentKind.AGP_Q, AgentKind.IQL, AgentKind.VDN])
    seeds: List[int] = field(default_factory=lambda: [0, 1, 2, 3, 4])
    output_dir: str = "out"
    heatmaps: bool = False
    heatmap_batch: int = 1_000
    workers: int = 1

    def __post_init__(self):
        self.methods = [AgentKind.parse(m) for m in self.methods]
        self.seeds = [int(s) for s in self.seeds]

    def validate(self) -> "ExperimentConfig":
        self.train.validate()
        if not self.seeds:
            raise SpecValidationError("seed list must be nonempty", detail={"field": "seeds"})
        if len(set(self.seeds)) != len(self.seeds):
            raise SpecValidationError(f"duplicate seeds in {self.seeds}", detail={"field": "seeds"})
        if not self.methods:
            raise SpecValidationError("method list must be nonempty", detail={"field": "methods"})
        if self.heatmap_batch < 1:
            raise SpecValidationError("heatmap_batch must be >= 1", detail={"field": "heatmap_batch"})
        if self.workers < 1:
            raise SpecValidationError("workers must be >= 1", detail={"field": "workers"})
        return self

    @classmethod
    def from_dict(cls, d: Dict[str, Any]) -> "ExperimentConfig":
        d = dict(d or {})
        train = TrainConfig.from_dict(d.pop("train", {}) or {})
        known = {f for f in cls.__dataclass_fields__ if f != "train"}
        return cls(train=train, **{k: v for k, v in d.items() if k in known})

    def to_dict(self) -> Dict[str, Any]:
        return {
            "train": self.train.to_dict(),
            "methods": [m.value for m in self.methods],
            "seeds": list(self.seeds),
            "output_dir": self.output_dir,
            "heatmaps": self.heatmaps,
            "heatmap_batch": self.heatmap_batch,
            "workers": self.workers,
        }


# Learning curves
@dataclass(frozen=True)
class CurvePoint:
    """One evaluation point of a run."""
    episode: int
    mean_reward: float
    success_rate: float
    epsilon: float


@dataclass
class LearningCurve:
    """
    Ordered evaluation points of one run.

    Invariants: episode indices strictly increase; success rates lie in [0, 1].
    """
    method: Optional[AgentKind] = None
    seed: Optional[int] = None
    points: List[CurvePoint] = field(default_factory=list)

    def append(self, point: CurvePoint) -> None:
        if self.points and point.episode <= self.points[-1].episode:
            raise SpecValidationError(
                f"episode indices must strictly increase ({self.points[-1].episode} -> {point.episode})")
        if not 0.0 <= point.success_rate <= 1.0:
            raise SpecValidationError(f"success rate out of [0, 1]: {point.success_rate}")
        self.points.append(point)

    @property
    def final_success(self) -> Optional[float]:
        return self.points[-1].success_rate if self.points else None

    def __len__(self) -> int:
        return len(self.points)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "method": self.method.value if self.method else None,
            "seed": self.seed,
            "points": [asdict(p) for p in self.points],
        }

    def __repr__(self) -> str:
        return f"<LearningCurve method={self.method and self.method.value} seed={self.seed} points={len(self.points)}>"
