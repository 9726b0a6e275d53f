import itertools

import numpy as np
import pytest
from hypothesis import given, strategies as st

from segadv.core import ValidationError
from segadv.env import (
    JunctionEnv,
    Policy,
    build_rollout,
    decode_state,
    exact_values,
    mc_value,
    rollout,
    state_id,
)
from segadv.segmentation import segment_probability


def _enumerate_value(env, policy, u, flag):
    """Exhaustive oracle: probability of an all-correct outcome from state (u, flag)."""
    if flag:
        return 0.0
    probs = policy.probs()
    total = 0.0
    for choices in itertools.product(range(env.choices), repeat=env.num_junctions):
        ro = build_rollout(env, probs, np.array(choices))
        if ro.states[u] != state_id(u, 0):
            continue
        # probability of the choices still ahead of u
        ahead = env.remaining_junctions(u)
        w = np.prod([probs[j, choices[j]] for j in ahead])
        total += w * ro.trajectory.reward
    return total


class TestLayout:
    def test_single_junction(self):
        env = JunctionEnv(1, 0, 2)
        for seed in range(20):
            ro = rollout(env, Policy.uniform(env), seed)
            assert ro.trajectory.T == 1
            assert ro.trajectory.gen_probs.tolist() == [0.5]
            assert ro.trajectory.reward in (0.0, 1.0)

    def test_horizon(self):
        env = JunctionEnv.from_seed(2, 3, 3, 0)
        assert env.T == 11
        lengths = {rollout(env, Policy.uniform(env), s).trajectory.T for s in range(100)}
        assert lengths == {11}

    def test_junction_steps_and_tokens(self):
        env = JunctionEnv(2, 3, 4, (1, 2))
        assert env.junction_steps.tolist() == [3, 7]
        ro = rollout(env, Policy.uniform(env), 0)
        corridor = np.setdiff1d(np.arange(env.T), env.junction_steps)
        assert np.all(ro.trajectory.gen_probs[corridor] == 1.0)
        assert np.all(ro.trajectory.tokens[corridor] >= env.choices)
        assert np.all(ro.trajectory.tokens[env.junction_steps] < env.choices)

    def test_state_roundtrip(self):
        assert decode_state(state_id(7, 1)) == (7, 1)

    @pytest.mark.parametrize("args", [(0, 1, 2), (1, -1, 2), (1, 1, 1), (2, 1, 2, (0, 5))])
    def test_invalid(self, args):
        with pytest.raises(ValidationError):
            JunctionEnv(*args)


class TestPolicy:
    def test_normalized(self):
        env = JunctionEnv.from_seed(4, 2, 5, 1)
        p = Policy(np.random.default_rng(0).normal(size=(4, 5))).probs()
        assert np.all(np.abs(p.sum(axis=1) - 1.0) <= 1e-12)

    def test_correct_prob(self):
        env = JunctionEnv.from_seed(3, 1, 4, 2)
        np.testing.assert_allclose(Policy.with_correct_prob(env, 0.6).correct_probs(env), 0.6)

    def test_deterministic_correct_rewards(self):
        env = JunctionEnv.from_seed(3, 2, 4, 5)
        logits = np.full((3, 4), -1e9)
        logits[np.arange(3), env.correct] = 0.0
        policy = Policy(logits)
        assert all(rollout(env, policy, s).trajectory.reward == 1.0 for s in range(50))
        assert mc_value(env, policy, state_id(0, 0), 17, 0) == (1.0, 0.0)


class TestValues:
    def test_two_junctions_uniform(self):
        env = JunctionEnv(2, 1, 2)
        policy = Policy.uniform(env)
        assert exact_values(env, policy)[0, 0] == pytest.approx(0.25)
        assert _enumerate_value(env, policy, 0, 0) == pytest.approx(0.25)

    def test_after_mistake_zero(self):
        env = JunctionEnv(3, 2, 3, (0, 1, 2))
        table = exact_values(env, Policy.uniform(env))
        assert np.all(table[:, 1] == 0.0)
        assert mc_value(env, Policy.uniform(env), state_id(5, 1), 10, 0) == (0.0, 0.0)

    def test_after_all_correct(self):
        env = JunctionEnv(2, 3, 2)
        table = exact_values(env, Policy.uniform(env))
        assert np.all(table[env.junction_steps[-1] + 1:, 0] == 1.0)

    @given(st.integers(1, 3), st.integers(0, 2), st.integers(2, 3), st.integers(0, 1000))
    def test_dp_matches_enumeration(self, J, C, K, seed):
        env = JunctionEnv.from_seed(J, C, K, seed)
        policy = Policy(np.random.default_rng(seed).normal(size=(J, K)))
        table = exact_values(env, policy)
        for u in range(env.T + 1):
            assert table[u, 0] == pytest.approx(_enumerate_value(env, policy, u, 0), abs=1e-12)

    def test_rollout_states_consistent_with_reward(self):
        env = JunctionEnv.from_seed(3, 2, 3, 4)
        policy = Policy.uniform(env)
        table = exact_values(env, policy).reshape(-1)
        for s in range(50):
            ro = rollout(env, policy, s)
            assert table[ro.states[-1]] == ro.trajectory.reward


class TestMonteCarlo:
    def test_concentration_32(self):
        env = JunctionEnv(2, 1, 2)
        policy = Policy.uniform(env)
        inside = 0
        for seed in range(200):
            v, se = mc_value(env, policy, state_id(0, 0), 32, seed)
            inside += abs(v - 0.25) <= 3 * se
        assert inside / 200 >= 0.99

    def test_invalid_n(self):
        env = JunctionEnv(1, 0, 2)
        with pytest.raises(ValidationError):
            mc_value(env, Policy.uniform(env), 0, 0, 0)


class TestDeterminism:
    def test_same_seed(self):
        env = JunctionEnv.from_seed(4, 3, 3, 0)
        a = rollout(env, Policy.uniform(env), 99)
        b = rollout(env, Policy.uniform(env), 99)
        assert a.trajectory == b.trajectory and np.array_equal(a.states, b.states)

    def test_probability_threshold_alignment(self):
        env = JunctionEnv.from_seed(5, 4, 3, 0)
        for seed in range(20):
            ro = rollout(env, Policy.uniform(env), seed)
            b = segment_probability(ro.trajectory, 0.5)
            assert list(b.positions) == sorted(set((env.junction_steps + 1).tolist()) | {env.T})
