import numpy as np
import pytest

from actiongraphpy.types_models import AgentKind, EnvSpec, GameName, TrainConfig


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def topk_spec():
    return EnvSpec(game=GameName.TOPK, num_agents=4, top_k=2)


@pytest.fixture
def small_train_config(topk_spec):
    """Tiny network and budget; enough to exercise every code path in seconds."""
    return TrainConfig(env=topk_spec, kind=AgentKind.AGP_Q, episodes=60, batch_size=8, buffer_capacity=200,
                       target_update_interval=10, eval_interval=20, eval_episodes=50, hidden_dim=8,
                       num_layers=1, num_heads=2, seed=0)


@pytest.fixture(autouse=True)
def _no_output_override(monkeypatch):
    monkeypatch.delenv("ACTIONGRAPHPY_OUT", raising=False)
