"""
ActionGraphPy
=============

Cooperative multi-agent Q-learning and policy gradients where each agent sees an
attention-based summary of the others' available actions.

Typical use::

    from actiongraphpy import parse_config, run_suite
    report = run_suite(parse_config("configs/topk.yaml"))

Importing the package does no work and installs no logging handlers; the CLI
(`actiongraphpy ...`) does that.
"""

__version__ = "0.1.0"

# re-export exceptions and typed models for convenience
from .exceptions import *  # noqa: F401,F403
from .types_models import AgentKind, EnvSpec, ExperimentConfig, GameName, LearningCurve, PenaltyMode, TrainConfig

from .action_graph import ActionGraph, build_node_set
from .agents import Agent
from .config import parse_config
from .environments import CoordinationGame, make_env
from .runner import run_suite
from .training import run_experiment, train
from .verify import run_checks

__all__ = [
    "ActionGraph", "Agent", "AgentKind", "CoordinationGame", "EnvSpec", "ExperimentConfig", "GameName",
    "LearningCurve", "PenaltyMode", "TrainConfig", "build_node_set", "make_env", "parse_config",
    "run_checks", "run_experiment", "run_suite", "train", "__version__",
]
