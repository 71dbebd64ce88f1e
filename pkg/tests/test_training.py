import dataclasses
import hashlib

import numpy as np
import pytest

from actiongraphpy.agents import Agent
from actiongraphpy.environments import CoordinationGame, topk_target_set
from actiongraphpy.exceptions import ActionGraphError, EmptyBatchError, EvaluationError, KindMismatchError
from actiongraphpy.tensor import Adam
from actiongraphpy.training import (
    ReplayBuffer, RunningBaseline, Transition, collect_episode, epsilon_at, evaluate, pg_update, run_experiment,
    sync_target, td_update, train,
)
from actiongraphpy.types_models import AgentKind, EnvSpec, GameName, TrainConfig


def make_transition(n=4, reward=1.0, actions=None, **kw):
    return Transition(features=np.zeros((n, 1)), avail=np.ones((n, 2)),
                      actions=np.zeros(n, dtype=np.int64) if actions is None else np.asarray(actions),
                      reward=reward, **kw)


def test_replay_buffer_evicts_oldest_first(rng):
    buf = ReplayBuffer(3)
    with pytest.raises(EmptyBatchError):
        buf.sample(2, rng)
    for r in range(5):
        buf.add(make_transition(reward=float(r)))
    assert len(buf) == 3 and buf.total_added == 5
    assert sorted(t.reward for t in buf) == [2.0, 3.0, 4.0]
    assert len(buf.sample(10, rng)) == 10
    with pytest.raises(ValueError):
        ReplayBuffer(0)


def test_epsilon_schedule():
    cfg = TrainConfig(episodes=1000, epsilon_start=1.0, epsilon_end=0.05, anneal_fraction=0.2)
    assert epsilon_at(0, cfg) == pytest.approx(1.0)
    assert epsilon_at(100, cfg) == pytest.approx(0.525)
    assert epsilon_at(200, cfg) == pytest.approx(0.05)
    assert epsilon_at(999, cfg) == pytest.approx(0.05)


def test_running_baseline():
    b = RunningBaseline(decay=0.5)
    assert b.update(np.array([1.0, 3.0])) == pytest.approx(1.0)
    assert b.update(np.array([1.0])) == pytest.approx(1.0)


def test_td_update_fits_constant_reward(topk_spec, rng):
    agent = Agent(AgentKind.VDN, topk_spec, rng, hidden_dim=16, num_heads=2)
    target = agent.clone()
    opt = Adam(agent.parameters(), lr=1e-2)
    batch = [make_transition(reward=1.0) for _ in range(8)]
    first = td_update(batch, agent, target, opt, gamma=0.99)
    for _ in range(300):
        last = td_update(batch, agent, target, opt, gamma=0.99)
    assert last < min(first, 1e-3)


def test_td_update_iql_per_agent_targets(topk_spec, rng):
    agent = Agent(AgentKind.IQL, topk_spec, rng, hidden_dim=16, num_heads=2)
    opt = Adam(agent.parameters(), lr=1e-2)
    batch = [make_transition(reward=-1.0) for _ in range(4)]
    for _ in range(300):
        loss = td_update(batch, agent, agent.clone(), opt)
    q, _ = agent.scores(np.zeros((1, 4, 1)), np.ones((1, 4, 2)))
    np.testing.assert_allclose(q.values[0, :, 0], -1.0, atol=0.05)
    assert loss < 1e-2


def test_td_update_bootstraps_non_terminal_steps(rng):
    """Two-step chain: s0 -(r=0)-> s1 -(r=1)-> end, only action 0 open at s1. With gamma 0.5, Q_tot(s0) -> 0.5."""
    spec = EnvSpec(game=GameName.EXACTLY_ONE, num_agents=2, agent_ids=False, obs_dim=1)
    agent = Agent(AgentKind.VDN, spec, rng, hidden_dim=16, num_heads=2)
    target = agent.clone()
    opt = Adam(agent.parameters(), lr=1e-2)
    s0, s1 = np.zeros((2, 1)), np.ones((2, 1))
    avail = np.ones((2, 2))
    zero = np.zeros(2, dtype=np.int64)
    only_first = np.array([[1, 0], [1, 0]])
    first = Transition(s0, avail, zero, 0.0, done=False, next_features=s1, next_avail=only_first)
    second = Transition(s1, avail, zero, 1.0, done=True)
    for step in range(1500):
        td_update([first, second], agent, target, opt, gamma=0.5)
        if step % 25 == 0:
            sync_target(agent, target)
    q0, _ = agent.scores(s0[None], avail[None])
    q1, _ = agent.scores(s1[None], avail[None])
    assert q1.values[0, :, 0].sum() == pytest.approx(1.0, abs=0.05)
    assert q0.values[0, :, 0].sum() == pytest.approx(0.5, abs=0.05)


def test_update_kind_checks(topk_spec, rng):
    pg = Agent(AgentKind.AGP_PG, topk_spec, rng, hidden_dim=8, num_heads=2)
    q = Agent(AgentKind.AGP_Q, topk_spec, rng, hidden_dim=8, num_heads=2)
    with pytest.raises(KindMismatchError):
        td_update([make_transition()], pg, pg.clone(), Adam(pg.parameters()))
    with pytest.raises(KindMismatchError):
        pg_update([make_transition()], q, Adam(q.parameters()))
    with pytest.raises(EmptyBatchError):
        td_update([], q, q.clone(), Adam(q.parameters()))


def test_pg_update_zero_advantage_leaves_parameters(topk_spec, rng):
    agent = Agent(AgentKind.AGP_PG, topk_spec, rng, hidden_dim=8, num_heads=2)
    before = {k: v.copy() for k, v in agent.state_dict().items()}
    baseline = RunningBaseline(value=1.0)
    loss = pg_update([make_transition(reward=1.0) for _ in range(4)], agent, Adam(agent.parameters()), baseline)
    assert loss == pytest.approx(0.0)
    for name, values in agent.state_dict().items():
        np.testing.assert_array_equal(values, before[name])


def test_pg_update_raises_probability_of_rewarded_action(topk_spec, rng):
    agent = Agent(AgentKind.AGP_PG, topk_spec, rng, hidden_dim=8, num_heads=2)
    opt = Adam(agent.parameters(), lr=1e-2)
    ones = np.ones(4, dtype=np.int64)
    good = [make_transition(reward=1.0, actions=ones) for _ in range(4)]
    bad = [make_transition(reward=-1.0) for _ in range(4)]
    features, avail = np.zeros((1, 4, 1)), np.ones((1, 4, 2))
    before = np.exp(agent.log_probs(features, avail).values[0, :, 1]).mean()
    for _ in range(30):
        pg_update(good + bad, agent, opt, RunningBaseline(value=0.0), epochs=2)
    after = np.exp(agent.log_probs(features, avail).values[0, :, 1]).mean()
    assert after > before


class TopKOracle:
    """Picks exactly the K largest signals; needs no parameters."""

    def __init__(self, k):
        self.k = k

    def greedy_actions(self, features, avail):
        out = np.zeros(features.shape[:2], dtype=np.int64)
        for b in range(features.shape[0]):
            out[b, list(topk_target_set(features[b, :, 0], self.k))] = 1
        return out


def test_evaluate_with_oracle_and_silent_agents(rng):
    env = CoordinationGame(EnvSpec(game=GameName.TOPK, num_agents=6, top_k=2))
    assert evaluate(env, TopKOracle(2), 2500, rng) == (1.0, 1.0)

    class Silent:
        def greedy_actions(self, features, avail):
            return np.zeros(features.shape[:2], dtype=np.int64)

    assert evaluate(env, Silent(), 100, rng) == (-1.0, 0.0)
    assert env.observation is None


def test_collect_episode_fills_buffer(topk_spec, rng):
    agent = Agent(AgentKind.IQL, topk_spec, rng, hidden_dim=8, num_heads=2)
    buf = ReplayBuffer(10)
    t = collect_episode(CoordinationGame(topk_spec), agent, 0.5, rng, buffer=buf)
    assert len(buf) == 1 and t.done and t.reward in (-1.0, 1.0)


def test_train_curve_shape_and_determinism(small_train_config):
    first = train(small_train_config)
    again = train(small_train_config)
    assert [p.episode for p in first.curve.points] == [20, 40, 60]
    assert first.curve.points == again.curve.points
    assert first.updates > 0
    for a, b in zip(first.agent.parameters(), again.agent.parameters()):
        np.testing.assert_array_equal(a.values, b.values)


def test_train_pg_and_zero_episodes(small_train_config):
    pg = dataclasses.replace(small_train_config, kind=AgentKind.AGP_PG, ppo_epochs=2)
    result = train(pg)
    assert all(p.epsilon == 0.0 for p in result.curve.points)
    empty = dataclasses.replace(small_train_config, episodes=0)
    assert len(run_experiment(empty)) == 0


def test_different_seeds_give_different_parameters(small_train_config):
    a = train(small_train_config.with_run(AgentKind.IQL, 0))
    b = train(small_train_config.with_run(AgentKind.IQL, 1))
    assert [p.episode for p in a.curve.points] == [p.episode for p in b.curve.points]
    first, second = a.agent.state_dict(), b.agent.state_dict()
    assert any(not np.array_equal(first[name], second[name]) for name in first)


def parameter_digest(agent):
    digest = hashlib.sha256()
    for name, values in sorted(agent.state_dict().items()):
        digest.update(name.encode())
        digest.update(np.ascontiguousarray(values).tobytes())
    return digest.hexdigest()


def test_evaluate_leaves_parameters_untouched(topk_spec, rng):
    agent = Agent(AgentKind.AGP_Q, topk_spec, rng, hidden_dim=8, num_heads=2)
    before = parameter_digest(agent)
    evaluate(CoordinationGame(topk_spec), agent, 300, np.random.default_rng(5))
    assert parameter_digest(agent) == before
    assert all(p.grad is None or not np.any(p.grad) for p in agent.parameters())


def test_evaluate_needs_an_episode(topk_spec, rng):
    agent = Agent(AgentKind.IQL, topk_spec, rng, hidden_dim=8, num_heads=2)
    with pytest.raises(EvaluationError) as err:
        evaluate(CoordinationGame(topk_spec), agent, 0, rng)
    assert isinstance(err.value, ActionGraphError)


def test_random_collection_on_exactly_one_matches_enumeration():
    spec = EnvSpec(game=GameName.EXACTLY_ONE, num_agents=4)
    rng = np.random.default_rng(11)
    agent = Agent(AgentKind.IQL, spec, rng, hidden_dim=8, num_heads=2)
    env = CoordinationGame(spec)
    episodes = 10_000
    rate = np.mean([collect_episode(env, agent, 1.0, rng).success for _ in range(episodes)])
    sigma = np.sqrt(0.25 * 0.75 / episodes)
    assert abs(rate - 4 * 0.5 ** 4) <= 4 * sigma


@pytest.mark.slow
@pytest.mark.parametrize("kind,low,high", [
    (AgentKind.AGP_Q, 0.70, 1.0),
    (AgentKind.IQL, 0.0, 0.50),
    (AgentKind.VDN, 0.0, 0.50),
    (AgentKind.AGP_NO_CROSS, 0.0, 0.50),
    (AgentKind.AGP_NO_GRAPH, 0.0, 0.50),
    (AgentKind.AGP_PG, 0.65, 1.0),
])
def test_topk_learning_separation(kind, low, high):
    finals = []
    for seed in range(5):
        cfg = TrainConfig(env=EnvSpec(game=GameName.TOPK, num_agents=6, top_k=2), kind=kind, seed=seed,
                          episodes=300_000, eval_interval=50_000, eval_episodes=5_000)
        finals.append(run_experiment(cfg).final_success)
    assert low <= float(np.mean(finals)) <= high


@pytest.mark.slow
def test_exactly_one_separation():
    def final(kind):
        scores = []
        for seed in range(5):
            cfg = TrainConfig(env=EnvSpec(game=GameName.EXACTLY_ONE, num_agents=4, agent_ids=True), kind=kind,
                              seed=seed, episodes=100_000, eval_interval=25_000, eval_episodes=5_000)
            scores.append(run_experiment(cfg).final_success)
        return float(np.mean(scores))

    assert final(AgentKind.AGP_Q) >= 0.90
    assert final(AgentKind.AGP_NO_GRAPH) <= 0.50


@pytest.mark.slow
@pytest.mark.parametrize("kind,low,high", [
    (AgentKind.AGP_Q, 0.65, 1.0),
    (AgentKind.IQL, 0.0, 0.45),
    (AgentKind.VDN, 0.0, 0.45),
])
def test_anticoord_learning_separation(kind, low, high):
    finals = []
    for seed in range(5):
        cfg = TrainConfig(env=EnvSpec(game=GameName.ANTICOORD, num_agents=6, top_k=2), kind=kind, seed=seed,
                          episodes=300_000, eval_interval=50_000, eval_episodes=5_000)
        finals.append(run_experiment(cfg).final_success)
    assert low <= float(np.mean(finals)) <= high


@pytest.mark.slow
def test_pg_learns_exactly_one_with_two_agents():
    cfg = TrainConfig(env=EnvSpec(game=GameName.EXACTLY_ONE, num_agents=2, agent_ids=True), kind=AgentKind.AGP_PG,
                      seed=0, episodes=50_000, eval_interval=10_000, eval_episodes=2_000)
    assert run_experiment(cfg).final_success >= 0.9
