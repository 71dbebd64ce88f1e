import numpy as np
import pytest

from actiongraphpy.agents import Agent
from actiongraphpy.environments import CoordinationGame
from actiongraphpy.exceptions import KindMismatchError
from actiongraphpy.fileops import read_matrix_csv
from actiongraphpy.heatmaps import attention_summary, export_heatmaps
from actiongraphpy.paths import heatmap_file
from actiongraphpy.training import train
from actiongraphpy.types_models import AgentKind, EnvSpec, GameName, TrainConfig

TOPK6 = EnvSpec(game=GameName.TOPK, num_agents=6, top_k=2)


def test_export_writes_every_head_and_mean(tmp_path, rng):
    agent = Agent(AgentKind.AGP_Q, TOPK6, rng, hidden_dim=16, num_layers=2, num_heads=4)
    export = export_heatmaps(agent, CoordinationGame(TOPK6), 50, tmp_path, rng)
    assert export.num_layers == 2 and export.num_heads == 4 and export.batch == 50
    assert len(export.files) == 2 * (4 + 1)
    assert heatmap_file(tmp_path, 1, 3) in export.files and heatmap_file(tmp_path, 0, None) in export.files
    for path in export.files:
        labels, matrix = read_matrix_csv(path)
        assert matrix.shape == (12, 12)
        assert labels[0] == "agent0-act0" and labels[-1] == "agent5-act1"
        np.testing.assert_allclose(matrix.sum(axis=1), 1.0, atol=1e-5)
    np.testing.assert_allclose(export.mean(1), export.layers[1].mean(axis=0))


def test_export_without_folder_and_env_untouched(rng):
    env = CoordinationGame(TOPK6)
    agent = Agent(AgentKind.AGP_PG, TOPK6, rng, hidden_dim=8, num_layers=1, num_heads=2)
    export = export_heatmaps(agent, env, 5, None, rng)
    assert export.files == [] and env.observation is None
    assert len(list(export.matrices())) == 3


def test_no_cross_agent_has_zero_cross_mass(rng):
    agent = Agent(AgentKind.AGP_NO_CROSS, TOPK6, rng, hidden_dim=8, num_layers=1, num_heads=2)
    summary = attention_summary(export_heatmaps(agent, CoordinationGame(TOPK6), 20, None, rng))
    assert summary["cross_agent_mass"] == 0.0
    assert summary["self_agent_mass"] == 1.0
    assert summary["uniform_baseline"] == pytest.approx(1 / 12)


def test_summary_of_raw_uniform_matrix(rng):
    agent = Agent(AgentKind.AGP_Q, TOPK6, rng, hidden_dim=8, num_layers=1, num_heads=2)
    node_set = agent.graph.node_set
    summary = attention_summary(np.full((12, 12), 1 / 12), node_set)
    assert summary["cross_agent_mass"] == pytest.approx(10 / 12)
    assert summary["cross_act1_to_act1"] == pytest.approx(1 / 12)
    with pytest.raises(ValueError):
        attention_summary(np.eye(12))


def test_export_rejects_graphless_agents(rng):
    for kind in (AgentKind.IQL, AgentKind.VDN, AgentKind.AGP_NO_GRAPH):
        agent = Agent(kind, TOPK6, rng, hidden_dim=8, num_heads=2)
        with pytest.raises(KindMismatchError):
            export_heatmaps(agent, CoordinationGame(TOPK6), 10, None, rng)
    agent = Agent(AgentKind.AGP_Q, TOPK6, rng, hidden_dim=8, num_heads=2)
    with pytest.raises(ValueError):
        export_heatmaps(agent, CoordinationGame(TOPK6), 0, None, rng)


@pytest.mark.slow
def test_trained_topk_agent_attends_to_other_selected_actions(rng):
    result = train(TrainConfig(env=TOPK6, kind=AgentKind.AGP_Q, seed=0, episodes=300_000,
                               eval_interval=50_000, eval_episodes=5_000))
    summary = attention_summary(export_heatmaps(result.agent, CoordinationGame(TOPK6), 1000, None, rng))
    assert summary["cross_act1_to_act1"] > summary["uniform_baseline"]
