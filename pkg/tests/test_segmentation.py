import numpy as np
import pytest
from hypothesis import given, strategies as st

from segadv.core import Trajectory, ValidationError
from segadv.segmentation import (
    BoundarySet,
    SegmentationConfig,
    SegMethod,
    avg_segment_length,
    boundary_count_histogram,
    segment,
    segment_delimiter,
    segment_probability,
    segment_uniform,
)

probs_lists = st.lists(st.floats(1e-6, 1.0), min_size=1, max_size=64)


def _traj(probs, tokens=None):
    tokens = list(range(len(probs))) if tokens is None else tokens
    return Trajectory(tokens, probs, 1)


def _scan(probs, p):
    """Scan oracle: 1-based state index after each low-probability token, plus T."""
    return sorted({i + 1 for i, q in enumerate(probs) if q < p} | {len(probs)})


class TestProbability:
    def test_fixture(self):
        probs = [0.9, 0.15, 0.8, 0.05, 0.99]
        got = segment_probability(_traj(probs), 0.2).positions
        assert list(got) == _scan(probs, 0.2) == [2, 4, 5]

    def test_tiny_threshold(self):
        assert segment_probability(_traj([1e-6, 0.5, 0.9]), 1e-12).positions == (3,)

    def test_all_low(self):
        assert segment_probability(_traj([0.1] * 6), 0.2).positions == tuple(range(1, 7))

    def test_tie_is_not_boundary(self):
        assert segment_probability(_traj([0.2, 0.2, 0.9]), 0.2).positions == (3,)

    def test_terminal_once(self):
        assert segment_probability(_traj([0.9, 0.1]), 0.2).positions == (2,)

    def test_first_token_allowed(self):
        assert segment_probability(_traj([0.1, 0.9]), 0.2).positions == (1, 2)

    @pytest.mark.parametrize("p", [0.0, -1, 1.5])
    def test_invalid(self, p):
        with pytest.raises(ValidationError):
            segment_probability(_traj([0.5]), p)

    @given(probs_lists, st.floats(1e-6, 1.0), st.floats(1e-6, 1.0))
    def test_monotone_in_p(self, probs, p1, p2):
        lo, hi = sorted((p1, p2))
        a = set(segment_probability(_traj(probs), lo).positions)
        b = set(segment_probability(_traj(probs), hi).positions)
        assert a <= b

    @given(probs_lists, st.floats(1e-6, 1.0))
    def test_matches_scan_and_contains_T(self, probs, p):
        b = segment_probability(_traj(probs), p)
        assert list(b.positions) == _scan(probs, p)
        assert len(probs) in b

    @given(probs_lists, st.floats(1e-6, 1.0))
    def test_deterministic(self, probs, p):
        assert segment_probability(_traj(probs), p) == segment_probability(_traj(probs), p)


class TestUniform:
    @pytest.mark.parametrize("T,M,expected", [
        (12, 4, (4, 8, 12)),
        (10, 1, tuple(range(1, 11))),
        (10, 4, (4, 8, 10)),
        (3, 7, (3,)),
    ])
    def test_examples(self, T, M, expected):
        assert segment_uniform(T, M).positions == expected

    @given(st.integers(1, 60), st.integers(1, 12))
    def test_agrees_with_crafted_probabilities(self, T, M):
        probs = [0.05 if (t + 1) % M == 0 else 0.9 for t in range(T)]
        assert segment_probability(_traj(probs), 0.2) == segment_uniform(T, M)

    def test_invalid(self):
        with pytest.raises(ValidationError):
            segment_uniform(10, 0)


class TestDelimiter:
    def test_fixture(self):
        traj = _traj([0.5] * 5, [7, 3, 9, 3, 5])
        assert segment_delimiter(traj, {3}).positions == (2, 4, 5)

    def test_disjoint(self):
        assert segment_delimiter(_traj([0.5] * 4, [1, 2, 3, 4]), {99}).positions == (4,)

    def test_all_delimiters(self):
        traj = _traj([0.5] * 4, [3, 3, 3, 3])
        assert segment_delimiter(traj, {3}).positions == (1, 2, 3, 4)

    def test_empty_set(self):
        with pytest.raises(ValidationError):
            segment_delimiter(_traj([0.5]), set())


class TestBoundarySet:
    def test_requires_terminal(self):
        with pytest.raises(ValidationError):
            BoundarySet((1, 2), 4)

    def test_range(self):
        with pytest.raises(ValidationError):
            BoundarySet.from_positions([0], 3)
        with pytest.raises(ValidationError):
            BoundarySet.from_positions([5], 3)

    def test_strictly_increasing(self):
        with pytest.raises(ValidationError):
            BoundarySet((2, 2, 4), 4)

    def test_mask_roundtrip(self):
        b = BoundarySet.from_positions([2, 5], 7)
        assert b.mask().tolist() == [False, True, False, False, True, False, True]
        assert BoundarySet.from_mask(b.mask()) == b


class TestStatistics:
    def test_uniform_four(self):
        assert avg_segment_length([BoundarySet((4, 8, 12), 12)]) == 4.0

    def test_two_sets(self):
        assert avg_segment_length([BoundarySet((10,), 10), BoundarySet((5, 10), 10)]) == 7.5

    def test_all_boundaries(self):
        assert avg_segment_length([BoundarySet(tuple(range(1, 7)), 6)]) == 1.0

    def test_empty(self):
        with pytest.raises(ValidationError):
            avg_segment_length([])

    def test_histogram(self):
        sets = [BoundarySet((10,), 10), BoundarySet((5, 10), 10), BoundarySet((3, 10), 10)]
        assert boundary_count_histogram(sets) == {1: 1, 2: 2}


class TestConfig:
    def test_dispatch(self):
        traj = _traj([0.9, 0.1, 0.9, 0.9], [1, 2, 3, 2])
        assert segment(traj, SegmentationConfig("probability", p=0.2)).positions == (2, 4)
        assert segment(traj, SegmentationConfig("uniform", M=2)).positions == (2, 4)
        assert segment(traj, SegmentationConfig("delimiter", delimiters={3})).positions == (3, 4)

    def test_validation(self):
        with pytest.raises(ValidationError):
            SegmentationConfig(SegMethod.PROBABILITY, p=0.0)
        with pytest.raises(ValidationError):
            SegmentationConfig(SegMethod.UNIFORM, M=0)
        with pytest.raises(ValidationError):
            SegmentationConfig(SegMethod.DELIMITER)
        with pytest.raises(ValueError):
            SegmentationConfig("sentences")
