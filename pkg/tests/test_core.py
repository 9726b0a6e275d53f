import warnings

import numpy as np
import pytest
from hypothesis import given, strategies as st

from segadv.core import (
    AlignmentError,
    DegenerateLengthWarning,
    Trajectory,
    ValidationError,
    adaptive_lambda,
    backward_accumulate,
    compute_deltas,
    gae,
    grpo_advantages,
    mc_advantage,
    value_series,
)

from conftest import gae_oracle, suffix_sum_oracle, value_cases


def _traj(T, reward=1.0):
    return Trajectory(np.arange(T), np.full(T, 0.5), reward)


class TestTrajectory:
    def test_rejects_fractional_reward(self):
        with pytest.raises(ValidationError):
            Trajectory([1, 2], [0.5, 0.5], 0.5)

    def test_rejects_length_mismatch(self):
        with pytest.raises(AlignmentError):
            Trajectory([1, 2, 3], [0.5, 0.5], 1)

    @pytest.mark.parametrize("p", [0.0, -0.1, 1.5, float("nan")])
    def test_rejects_bad_probability(self, p):
        with pytest.raises(ValidationError):
            Trajectory([1], [p], 1)

    def test_empty(self):
        with pytest.raises(ValidationError):
            Trajectory([], [], 0)

    def test_arrays_read_only(self):
        traj = _traj(3)
        with pytest.raises(ValueError):
            traj.tokens[0] = 9

    def test_equality(self):
        assert _traj(3) == _traj(3)
        assert _traj(3) != _traj(3, reward=0.0)


class TestDeltas:
    def test_fixture(self):
        d = compute_deltas(_traj(3), [0.5, 0.4, 0.6, 1.0])
        # independent scalar loop
        v = [0.5, 0.4, 0.6, 1.0]
        expected = [v[t + 1] - v[t] for t in range(3)]
        np.testing.assert_allclose(d, expected, atol=1e-15)
        np.testing.assert_allclose(d, [-0.1, 0.2, 0.4], atol=1e-12)

    def test_zero_values_terminal_reward(self):
        d = compute_deltas(_traj(5), [0, 0, 0, 0, 0, 1.0])
        assert d.tolist() == [0, 0, 0, 0, 1]

    def test_perfect_values(self):
        assert compute_deltas(_traj(3), [1, 1, 1, 1]).tolist() == [0, 0, 0]

    def test_length_mismatch(self):
        with pytest.raises(AlignmentError):
            compute_deltas(_traj(3), [0, 0, 1])

    def test_non_finite(self):
        with pytest.raises(ValidationError):
            compute_deltas(_traj(2), [np.nan, 0, 1])

    def test_unpinned_terminal(self):
        with pytest.raises(ValidationError):
            compute_deltas(_traj(2), [0, 0, 0.3])

    def test_value_series_pins_reward(self):
        traj = _traj(3, reward=0.0)
        assert value_series(traj, [0.1, 0.2, 0.3, 0.9])[-1] == 0.0
        assert value_series(traj, [0.1, 0.2, 0.3]).tolist() == [0.1, 0.2, 0.3, 0.0]
        with pytest.raises(AlignmentError):
            value_series(traj, [0.1])

    @given(value_cases())
    def test_telescoping(self, case):
        tokens, gen, reward, values = case
        d = compute_deltas(Trajectory(tokens, gen, reward), values)
        assert abs(d.sum() - (reward - values[0])) <= 1e-12 * max(1.0, np.abs(values).sum())


class TestGAE:
    def test_fixture(self):
        np.testing.assert_allclose(gae([-0.1, 0.2, 0.4], 0.5), gae_oracle([-0.1, 0.2, 0.4], 0.5))
        np.testing.assert_allclose(gae([-0.1, 0.2, 0.4], 0.5), [0.1, 0.4, 0.4], atol=1e-12)

    def test_mc_on_terminal_reward(self):
        assert gae([0, 0, 0, 0, 1], 1.0).tolist() == [1, 1, 1, 1, 1]

    @pytest.mark.parametrize("lam", [-0.01, 1.01])
    def test_bad_lambda(self, lam):
        with pytest.raises(ValidationError):
            gae([0.1], lam)

    @given(st.lists(st.floats(-10, 10), min_size=1, max_size=64), st.floats(0, 1))
    def test_recursion_matches_definition(self, deltas, lam):
        np.testing.assert_allclose(gae(deltas, lam), gae_oracle(deltas, lam), atol=1e-9)

    @given(st.lists(st.floats(-10, 10), min_size=1, max_size=64))
    def test_lambda_zero_is_identity(self, deltas):
        assert np.array_equal(gae(deltas, 0.0), np.asarray(deltas))

    @given(st.lists(st.floats(-10, 10), min_size=1, max_size=64))
    def test_lambda_one_is_mc_bitwise(self, deltas):
        assert np.array_equal(gae(deltas, 1.0), mc_advantage(deltas))

    def test_random_long(self, rng):
        for _ in range(1000):
            T = int(rng.integers(1, 513))
            d = rng.normal(size=T)
            lam = float(rng.uniform())
            ref = np.array(gae_oracle(d.tolist(), lam)) if T <= 64 else None
            if ref is None:
                # O(T^2) matrix form of the definition
                l = np.arange(T)[None, :] - np.arange(T)[:, None]
                W = np.where(l >= 0, lam ** np.clip(l, 0, None), 0.0)
                ref = W @ d
            np.testing.assert_allclose(gae(d, lam), ref, atol=1e-9)


class TestMC:
    def test_fixture(self):
        np.testing.assert_allclose(mc_advantage([-0.1, 0.2, 0.4]),
                                   suffix_sum_oracle([-0.1, 0.2, 0.4]), atol=1e-15)
        np.testing.assert_allclose(mc_advantage([-0.1, 0.2, 0.4]), [0.5, 0.6, 0.4], atol=1e-12)

    def test_zeros(self):
        assert mc_advantage([0, 0, 0]).tolist() == [0, 0, 0]


class TestAdaptiveLambda:
    def test_hundred(self):
        assert adaptive_lambda(100) == pytest.approx(0.95, abs=1e-12)

    def test_thousand(self):
        assert adaptive_lambda(1000) == pytest.approx(1 - 1 / 200, abs=1e-12)

    def test_clamp_warns(self):
        with pytest.warns(DegenerateLengthWarning):
            assert adaptive_lambda(5) == 0.0
        with pytest.warns(DegenerateLengthWarning):
            assert adaptive_lambda(1) == 0.0

    def test_no_warning_above_clamp(self):
        with warnings.catch_warnings():
            warnings.simplefilter("error")
            adaptive_lambda(6)

    @pytest.mark.parametrize("length,coeff", [(0, 0.2), (10, 0.0)])
    def test_invalid(self, length, coeff):
        with pytest.raises(ValidationError):
            adaptive_lambda(length, coeff)

    @given(st.integers(6, 10**6))
    def test_in_unit_interval(self, n):
        assert 0.0 < adaptive_lambda(n) < 1.0


class TestGRPO:
    def test_fixture(self):
        r = np.array([1, 0, 1, 1.0])
        sigma = np.sqrt(np.mean((r - r.mean()) ** 2))
        assert sigma == pytest.approx(np.sqrt(0.1875))
        np.testing.assert_allclose(grpo_advantages(r, 0.0), (r - 0.75) / sigma, atol=1e-12)
        np.testing.assert_allclose(grpo_advantages(r, 0.0),
                                   [0.5774, -1.7321, 0.5774, 0.5774], atol=1e-4)

    def test_pair(self):
        np.testing.assert_allclose(grpo_advantages([1, 0], 0.0), [1, -1], atol=1e-12)

    @pytest.mark.parametrize("eps", [0.0, 1e-8])
    def test_equal_rewards_zero(self, eps):
        assert grpo_advantages([1, 1, 1], eps).tolist() == [0, 0, 0]

    def test_group_too_small(self):
        with pytest.raises(ValidationError):
            grpo_advantages([1])

    @given(st.lists(st.sampled_from([0.0, 1.0]), min_size=2, max_size=64))
    def test_normalized(self, rewards):
        a = grpo_advantages(rewards, 0.0)
        assert abs(a.mean()) <= 1e-9
        if np.var(rewards) > 0:
            assert abs(np.mean(a ** 2) - 1.0) <= 1e-9


def test_backward_accumulate_ignores_last_factor():
    d = np.array([0.3, -0.2, 0.5])
    a = backward_accumulate(d, np.array([0.5, 0.5, 0.5]))
    b = backward_accumulate(d, np.array([0.5, 0.5, 123.0]))
    assert np.array_equal(a, b)
