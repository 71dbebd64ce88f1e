import numpy as np
import pytest

from actiongraphpy.agents import (
    Agent, joint_log_prob, mix_joint_q, policy_distribution, sample_actions, select_actions,
)
from actiongraphpy.environments import CoordinationGame
from actiongraphpy.exceptions import AllMaskedError, KindMismatchError, ShapeMismatchError
from actiongraphpy.tensor import Tensor
from actiongraphpy.types_models import AgentKind, EnvSpec, GameName


def test_select_actions_greedy_ties_and_masks():
    scores = np.array([[1.0, 1.0, 0.5], [0.2, 0.9, 0.9]])
    avail = np.array([[1, 1, 1], [1, 0, 1]])
    np.testing.assert_array_equal(select_actions(scores, avail), [0, 2])
    with pytest.raises(AllMaskedError):
        select_actions(scores, np.array([[0, 0, 0], [1, 1, 1]]))
    with pytest.raises(ShapeMismatchError):
        select_actions(scores, np.ones((2, 2)))


def test_select_actions_full_exploration_is_uniform_over_available(rng):
    scores = np.zeros((20000, 3))
    avail = np.tile([1, 0, 1], (20000, 1))
    picks = select_actions(scores, avail, epsilon=1.0, rng=rng)
    assert not (picks == 1).any()
    assert abs((picks == 0).mean() - 0.5) < 0.02


def test_sample_actions_never_picks_zero_probability(rng):
    probs = np.tile([0.25, 0.0, 0.75], (10000, 1))
    picks = sample_actions(probs, rng)
    assert not (picks == 1).any()
    assert abs((picks == 2).mean() - 0.75) < 0.02


def test_mixers():
    chosen = Tensor(np.array([[1.0, 2.0, 3.0]]))
    np.testing.assert_array_equal(mix_joint_q(chosen, AgentKind.IQL).values, [[1.0, 2.0, 3.0]])
    np.testing.assert_array_equal(mix_joint_q(chosen, AgentKind.VDN).values, [6.0])
    np.testing.assert_array_equal(mix_joint_q(chosen, AgentKind.AGP_Q).values, [6.0])
    with pytest.raises(KindMismatchError):
        mix_joint_q(chosen, AgentKind.AGP_PG)


@pytest.mark.parametrize("kind", list(AgentKind))
def test_every_kind_scores_and_acts(kind, topk_spec, rng):
    agent = Agent(kind, topk_spec, rng, hidden_dim=8, num_layers=1, num_heads=2)
    env = CoordinationGame(topk_spec)
    obs = env.reset(rng)
    scores, record = agent.scores(obs.features[None], obs.avail[None])
    assert scores.shape == (1, 4, 2)
    assert (record is not None) == kind.uses_graph
    actions = agent.act(obs, rng, epsilon=0.1, sample=True)
    assert actions.shape == (4,)
    assert set(actions.tolist()) <= {0, 1}


def test_context_slots_per_kind(topk_spec, rng):
    iql = Agent(AgentKind.IQL, topk_spec, rng, hidden_dim=8, num_heads=2)
    no_graph = Agent(AgentKind.AGP_NO_GRAPH, topk_spec, rng, hidden_dim=8, num_heads=2)
    assert iql.graph is None and iql.head.sizes[0] == topk_spec.feature_dim
    assert no_graph.graph is None and no_graph.head.sizes[0] == topk_spec.feature_dim + 8
    kappa, _ = no_graph.contexts(np.zeros((2, 4, 1)), np.ones((2, 4, 2)))
    np.testing.assert_array_equal(kappa.values, np.zeros((2, 4, 8)))
    no_cross = Agent(AgentKind.AGP_NO_CROSS, topk_spec, rng, hidden_dim=8, num_heads=2)
    assert not no_cross.graph.cross_agent


def test_policy_outputs(topk_spec, rng):
    agent = Agent(AgentKind.AGP_PG, topk_spec, rng, hidden_dim=8, num_layers=1, num_heads=2)
    features = rng.uniform(size=(3, 4, 1))
    avail = np.ones((3, 4, 2))
    kappa, _ = agent.contexts(features, avail)
    probs = policy_distribution(features, kappa, agent.head, avail).values
    np.testing.assert_allclose(probs.sum(axis=-1), 1.0, atol=1e-12)
    actions = np.zeros((3, 4), dtype=np.int64)
    logp = joint_log_prob(agent.log_probs(features, avail), actions).values
    np.testing.assert_allclose(logp, np.log(probs[..., 0]).sum(axis=-1), atol=1e-12)
    obs = CoordinationGame(topk_spec).reset(rng)
    a, lp = agent.act_with_log_prob(obs, rng, sample=True)
    assert lp is not None and lp <= 0.0
    with pytest.raises(KindMismatchError):
        Agent(AgentKind.VDN, topk_spec, rng, hidden_dim=8, num_heads=2).log_probs(features, avail)


def test_greedy_actions_are_batched_act(topk_spec, rng):
    agent = Agent(AgentKind.AGP_Q, topk_spec, rng, hidden_dim=8, num_layers=1, num_heads=2)
    env = CoordinationGame(topk_spec)
    observations = [env.reset(rng) for _ in range(6)]
    batch = agent.greedy_actions(np.stack([o.features for o in observations]),
                                 np.stack([o.avail for o in observations]))
    for obs, row in zip(observations, batch):
        np.testing.assert_array_equal(agent.act(obs), row)


def test_state_dict_round_trip_and_clone(topk_spec, rng):
    agent = Agent(AgentKind.AGP_Q, topk_spec, rng, hidden_dim=8, num_heads=2)
    twin = agent.clone()
    for p in twin.parameters():
        p.values += 1.0
    assert not np.allclose(agent.parameters()[0].values, twin.parameters()[0].values)
    twin.load_state_dict(agent.state_dict())
    for a, b in zip(agent.parameters(), twin.parameters()):
        np.testing.assert_array_equal(a.values, b.values)
    bad = agent.state_dict()
    bad.pop("head.b1")
    with pytest.raises(ShapeMismatchError):
        twin.load_state_dict(bad)
    names = list(agent.state_dict())
    assert "graph.W" in names and "graph.L1.Wq" in names and "head.W0" in names


def test_exactly_one_agent_uses_agent_ids(rng):
    spec = EnvSpec(game=GameName.EXACTLY_ONE, num_agents=4)
    agent = Agent(AgentKind.AGP_Q, spec, rng, hidden_dim=8, num_heads=2)
    assert agent.head.sizes[0] == 1 + 4 + 8
