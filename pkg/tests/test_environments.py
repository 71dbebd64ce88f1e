import itertools

import numpy as np
import pytest

from actiongraphpy.environments import (
    CoordinationGame, make_env, reset, score_joint_action, step_anticoord, step_exactly_one,
    step_latent_matching, step_mismatch_table, step_parity, step_topk, topk_target_set,
)
from actiongraphpy.exceptions import ArityError, EpisodeError, SpecValidationError
from actiongraphpy.types_models import EnvSpec, GameName, PenaltyMode


def test_topk_reward_and_success():
    u = np.array([0.9, 0.1, 0.8, 0.3, 0.2, 0.5])
    assert topk_target_set(u, 2) == frozenset({0, 2})
    ok = step_topk(u, [1, 0, 1, 0, 0, 0], 2)
    assert ok.reward == 1.0 and ok.success and ok.done
    bad = step_topk(u, [1, 1, 0, 0, 0, 0], 2)
    assert bad.reward == -1.0 and not bad.success
    assert step_topk(u, [0] * 6, 2).reward == -1.0


def test_topk_ties_go_to_lowest_index():
    assert topk_target_set(np.array([0.5, 0.5, 0.1]), 1) == frozenset({0})


def test_anticoord_penalty_modes():
    u = np.array([0.90, 0.85, 0.1, 0.2])
    a = [1, 1, 0, 0]
    per_pair = step_anticoord(u, a, 2, 0.1, 0.5)
    assert per_pair.success
    assert per_pair.reward == pytest.approx(0.5)
    assert per_pair.info["violations"] == 1
    u3 = np.array([0.90, 0.88, 0.86, 0.1])
    three = step_anticoord(u3, [1, 1, 1, 0], 3, 0.1, 0.5, PenaltyMode.PER_PAIR)
    flat = step_anticoord(u3, [1, 1, 1, 0], 3, 0.1, 0.5, PenaltyMode.FLAT)
    assert three.reward == pytest.approx(1.0 - 1.5)
    assert flat.reward == pytest.approx(0.5)
    spread = step_anticoord(np.array([0.9, 0.5, 0.1, 0.2]), [1, 1, 0, 0], 2, 0.1, 0.5)
    assert spread.reward == 1.0


def test_constructions():
    assert step_exactly_one([0, 1, 0, 0]).reward == 1.0
    assert step_exactly_one([1, 1, 0, 0]).reward == 0.0
    assert step_exactly_one([0, 0, 0, 0]).reward == 0.0
    assert step_latent_matching([1, 1], 1).success
    assert not step_latent_matching([1, 1], 0).success
    assert not step_latent_matching([0, 1], 0).success
    assert step_mismatch_table([0, 0]).reward == 3.0
    assert step_mismatch_table([1, 1]).reward == 2.0
    assert step_mismatch_table([0, 1]).reward == -1.0
    assert step_parity([0, 1, 1]).reward == 1.0
    assert step_parity([1, 1, 1]).reward == 0.0


def test_arity_errors():
    with pytest.raises(ArityError):
        step_topk(np.zeros(3), [1, 0], 1)
    with pytest.raises(ArityError):
        step_exactly_one([0, 2, 0])
    with pytest.raises(ArityError):
        step_latent_matching([0, 1, 1], 0)


def test_spec_validation():
    with pytest.raises(SpecValidationError, match="K <= N"):
        EnvSpec(game=GameName.TOPK, num_agents=6, top_k=9).validate()
    with pytest.raises(SpecValidationError):
        EnvSpec(game=GameName.LATENT_MATCHING, num_agents=3).validate()
    with pytest.raises(SpecValidationError):
        EnvSpec(game=GameName.ANTICOORD, penalty_lambda=-1.0).validate()
    assert EnvSpec(game=GameName.MISMATCH_TABLE).num_agents == 2


def test_reset_observations(rng):
    env = CoordinationGame(EnvSpec(game=GameName.TOPK, num_agents=6, top_k=2))
    obs = env.reset(rng)
    assert obs.features.shape == (6, 1)
    assert obs.avail.shape == (6, 2) and obs.avail.all()
    np.testing.assert_array_equal(obs.features[:, 0], obs.signals)
    assert ((obs.signals >= 0) & (obs.signals < 1)).all()


def test_agent_ids_default_on_for_exactly_one(rng):
    obs = reset(EnvSpec(game=GameName.EXACTLY_ONE, num_agents=4), rng)
    assert obs.features.shape == (4, 5)
    np.testing.assert_array_equal(obs.features[:, 1:], np.eye(4))
    np.testing.assert_array_equal(obs.features[:, 0], np.zeros(4))


def test_step_requires_reset(rng):
    env = make_env(EnvSpec(game=GameName.EXACTLY_ONE, num_agents=3))
    with pytest.raises(EpisodeError):
        env.step([1, 0, 0])
    env.reset(rng)
    env.step([1, 0, 0])
    with pytest.raises(EpisodeError):
        env.step([1, 0, 0])


def test_latent_matching_hidden_state_and_scoring(rng):
    spec = EnvSpec(game=GameName.LATENT_MATCHING)
    env = CoordinationGame(spec)
    seen = set()
    for _ in range(50):
        obs = env.reset(rng)
        s = env.hidden_state
        seen.add(s)
        assert env.evaluate([s, s]).success
        assert score_joint_action(spec, obs.signals, [s, s], hidden_state=s).success
    assert seen == {0, 1}
    with pytest.raises(EpisodeError):
        score_joint_action(spec, np.zeros(2), [0, 0])


def test_same_seed_same_resets_and_clone_independence():
    spec = EnvSpec(game=GameName.TOPK, num_agents=5, top_k=2)
    a = CoordinationGame(spec)
    b = a.clone()
    obs_a = a.reset(np.random.default_rng(9))
    obs_b = b.reset(np.random.default_rng(9))
    np.testing.assert_array_equal(obs_a.features, obs_b.features)
    b.step([0] * 5)
    assert a.observation is not None


def test_topk_signals_are_uniform_on_average():
    env = CoordinationGame(EnvSpec(game=GameName.TOPK, num_agents=6, top_k=2))
    rng = np.random.default_rng(2024)
    signals = np.stack([env.reset(rng).signals for _ in range(10_000)])
    means = signals.mean(axis=0)
    assert ((means >= 0.47) & (means <= 0.53)).all()


@pytest.mark.parametrize("n", range(1, 9))
def test_topk_has_exactly_one_rewarded_joint_action(n, rng):
    for k in range(1, n + 1):
        spec = EnvSpec(game=GameName.TOPK, num_agents=n, top_k=k)
        signals = rng.uniform(size=n)
        winners = [a for a in itertools.product((0, 1), repeat=n)
                   if score_joint_action(spec, signals, a).reward == 1.0]
        assert len(winners) == 1
        assert {i for i, x in enumerate(winners[0]) if x} == topk_target_set(signals, k)
