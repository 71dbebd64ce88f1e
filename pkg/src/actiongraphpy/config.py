"""
actiongraphpy.config
--------------------

YAML experiment configuration.

Grammar
-------
Keys are either flat or grouped under one of four section headers; every key belongs
to exactly one section, so both forms are equivalent:

    env:                       # flat form:
      game: topk               #   game: topk
      N: 6                     #   N: 6
      K: 2                     #   K: 2
    train:                     #   episodes: 300000
      episodes: 300000         #   methods: [AGP_Q, IQL, VDN]
    experiment:
      methods: [AGP_Q, IQL, VDN]

- env        : game, N, K, num_actions, obs_dim, epsilon_penalty, penalty_lambda, penalty_mode, agent_ids
- agent      : hidden_dim, num_layers, num_heads
- train      : lr, gamma, batch_size, buffer_capacity, target_update_interval, episodes,
               epsilon_start, epsilon_end, anneal_fraction, eval_interval, eval_episodes,
               ppo_clip, ppo_epochs, baseline_decay
- experiment : methods, seeds, output_dir, heatmaps, heatmap_batch, workers

Omitted keys take the library defaults (N=6, K=2, lr=5e-4, gamma=0.99, batch 32,
buffer 50000, target sync 200). Unknown keys, duplicate keys and values of the wrong
type raise ConfigurationError naming the key (and its line when known). The
ACTIONGRAPHPY_OUT environment variable overrides `output_dir`.
"""

from __future__ import annotations

import logging
from pathlib import Path
from typing import *

import yaml

from .exceptions import ConfigurationError, SpecValidationError
from .paths import resolve_output_root
from .types_models import AgentKind, EnvSpec, ExperimentConfig, GameName, PenaltyMode, TrainConfig

logger = logging.getLogger(__name__)

__all__ = ["SECTIONS", "parse_config", "parse_config_text", "config_from_mapping"]

SECTIONS: Dict[str, Tuple[str, ...]] = {
    "env": ("game", "N", "K", "num_actions", "obs_dim", "epsilon_penalty", "penalty_lambda",
            "penalty_mode", "agent_ids"),
    "agent": ("hidden_dim", "num_layers", "num_heads"),
    "train": ("lr", "gamma", "batch_size", "buffer_capacity", "target_update_interval", "episodes",
              "epsilon_start", "epsilon_end", "anneal_fraction", "eval_interval", "eval_episodes",
              "ppo_clip", "ppo_epochs", "baseline_decay"),
    "experiment": ("methods", "seeds", "output_dir", "heatmaps", "heatmap_batch", "workers"),
}
_SECTION_OF = {key: section for section, keys in SECTIONS.items() for key in keys}
_ENV_RENAME = {"N": "num_agents", "K": "top_k"}

_INT_KEYS = {"N", "K", "num_actions", "obs_dim", "hidden_dim", "num_layers", "num_heads", "batch_size",
             "buffer_capacity", "target_update_interval", "episodes", "eval_interval", "eval_episodes",
             "ppo_epochs", "heatmap_batch", "workers"}
_FLOAT_KEYS = {"epsilon_penalty", "penalty_lambda", "lr", "gamma", "epsilon_start", "epsilon_end",
               "anneal_fraction", "ppo_clip", "baseline_decay"}
_BOOL_KEYS = {"heatmaps"}


class _Mapping(dict):
    """dict that remembers the 1-based source line of each key."""

    def __init__(self):
        super().__init__()
        self.lines: Dict[Any, int] = {}


class _StrictLoader(yaml.SafeLoader):
    """SafeLoader that rejects duplicate keys instead of silently keeping the last one."""

    def construct_mapping(self, node, deep=False):
        self.flatten_mapping(node)
        out = _Mapping()
        for key_node, value_node in node.value:
            key = self.construct_object(key_node, deep=deep)
            line = key_node.start_mark.line + 1
            if key in out:
                raise ConfigurationError(f"duplicate key {key!r} (first set on line {out.lines[key]})",
                                         field=str(key), line=line)
            out[key] = self.construct_object(value_node, deep=deep)
            out.lines[key] = line
        return out


_StrictLoader.add_constructor(yaml.resolver.BaseResolver.DEFAULT_MAPPING_TAG,
                              lambda loader, node: loader.construct_mapping(node, deep=True))


def _coerce(key: str, value: Any, line: Optional[int]) -> Any:
    def bad(expected: str) -> ConfigurationError:
        return ConfigurationError(f"{key} must be {expected}, got {value!r}", field=key, line=line)

    if key in _INT_KEYS:
        if isinstance(value, bool):
            raise bad("an integer")
        if isinstance(value, float) and value.is_integer():
            return int(value)
        if isinstance(value, int):
            return value
        raise bad("an integer")
    if key in _FLOAT_KEYS:
        if isinstance(value, bool):
            raise bad("a number")
        try:
            # YAML 1.1 reads 5e-4 (no dot) as a string
            return float(value)
        except (TypeError, ValueError):
            raise bad("a number") from None
    if key in _BOOL_KEYS:
        if not isinstance(value, bool):
            raise bad("true or false")
        return value
    if key == "agent_ids":
        if value is not None and not isinstance(value, bool):
            raise bad("true, false or null")
        return value
    if key == "game":
        try:
            return GameName(str(value).strip().lower())
        except ValueError:
            raise bad(f"one of {[g.value for g in GameName]}") from None
    if key == "penalty_mode":
        try:
            return PenaltyMode(str(value).strip().lower())
        except ValueError:
            raise bad(f"one of {[m.value for m in PenaltyMode]}") from None
    if key == "methods":
        items = value.split(",") if isinstance(value, str) else value
        if not isinstance(items, list):
            raise bad("a list of agent kinds")
        try:
            return [AgentKind.parse(m) for m in items]
        except SpecValidationError as exc:
            raise ConfigurationError(exc.message, field=key, line=line) from exc
    if key == "seeds":
        if not isinstance(value, list) or any(isinstance(s, bool) or not isinstance(s, int) for s in value):
            raise bad("a list of integers")
        return list(value)
    if key == "output_dir":
        if not isinstance(value, (str, int)):
            raise bad("a path")
        return str(value)
    return value


def _flatten(data: Mapping[str, Any]) -> Dict[str, Tuple[Any, Optional[int]]]:
    """Merge sectioned and flat keys into {key: (value, line)}, checking membership."""
    lines = getattr(data, "lines", {})
    flat: Dict[str, Tuple[Any, Optional[int]]] = {}

    def put(key: Any, value: Any, line: Optional[int], section: Optional[str]) -> None:
        name = str(key)
        owner = _SECTION_OF.get(name)
        if owner is None:
            raise ConfigurationError(f"unknown configuration key {name!r}", field=name, line=line)
        if section is not None and owner != section:
            raise ConfigurationError(f"key {name!r} belongs to section {owner!r}, not {section!r}",
                                     field=name, line=line)
        if name in flat:
            raise ConfigurationError(f"duplicate key {name!r} (first set on line {flat[name][1]})",
                                     field=name, line=line)
        flat[name] = (value, line)

    for key, value in data.items():
        line = lines.get(key)
        if key in SECTIONS:
            if value is None:
                continue
            if not isinstance(value, Mapping):
                raise ConfigurationError(f"section {key!r} must be a mapping", field=str(key), line=line)
            inner = getattr(value, "lines", {})
            for k, v in value.items():
                put(k, v, inner.get(k, line), key)
        else:
            put(key, value, line, None)
    return flat


def config_from_mapping(data: Optional[Mapping[str, Any]]) -> ExperimentConfig:
    """
    Build and validate an ExperimentConfig from parsed YAML (or any mapping).

    Raises
    ------
    ConfigurationError
        Unknown / duplicate / mistyped key, or a violated constraint (message names it).
    """
    if data is None:
        data = {}
    if not isinstance(data, Mapping):
        raise ConfigurationError(f"configuration must be a mapping, got {type(data).__name__}")
    values = {key: _coerce(key, value, line) for key, (value, line) in _flatten(data).items()}

    env_kwargs = {_ENV_RENAME.get(k, k): v for k, v in values.items() if _SECTION_OF[k] == "env"}
    train_kwargs = {k: v for k, v in values.items() if _SECTION_OF[k] in ("train", "agent")}
    exp_kwargs = {k: v for k, v in values.items() if _SECTION_OF[k] == "experiment"}
    exp_kwargs["output_dir"] = str(resolve_output_root(exp_kwargs.get("output_dir", "out")))

    config = ExperimentConfig(train=TrainConfig(env=EnvSpec(**env_kwargs), **train_kwargs), **exp_kwargs)
    try:
        config.validate()
    except SpecValidationError as exc:
        fld = exc.detail.get("field") if isinstance(exc.detail, dict) else None
        raise ConfigurationError(exc.message, field=fld, line=_line_of(data, fld)) from exc
    return config


def _line_of(data: Mapping[str, Any], key: Optional[str]) -> Optional[int]:
    if key is None:
        return None
    lines = getattr(data, "lines", {})
    if key in lines:
        return lines[key]
    section = _SECTION_OF.get(key)
    inner = data.get(section) if section else None
    return getattr(inner, "lines", {}).get(key) if inner is not None else None


def parse_config_text(text: str, source: str = "<string>") -> ExperimentConfig:
    """Parse YAML text; see the module docstring for the grammar."""
    try:
        data = yaml.load(text, Loader=_StrictLoader)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        line = mark.line + 1 if mark is not None else None
        raise ConfigurationError(f"{source}: invalid YAML: {getattr(exc, 'problem', None) or exc}",
                                 line=line) from exc
    return config_from_mapping(data)


def parse_config(path: Union[str, Path]) -> ExperimentConfig:
    """
    Read and validate the experiment configuration at `path`.

    An empty file yields all defaults.

    Raises
    ------
    ConfigurationError
        Missing file, invalid YAML (with line), unknown / duplicate key, or validation failure.
    """
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigurationError(f"cannot read config {path}: {exc}") from exc
    config = parse_config_text(text, source=str(path))
    logger.debug("parsed %s: %s", path, config.to_dict())
    return config
