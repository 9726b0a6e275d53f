"""Segment-boundary detection for generated sequences.

A boundary is a state index ``u`` in ``1..T``. Position ``u`` refers to the
state reached after emitting token ``u - 1``, so the probability rule marks
``u`` when ``gen_probs[u - 1] < p``. The terminal state ``T`` is always a
boundary.
"""

from __future__ import annotations

import enum
from collections import Counter
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .core import Trajectory, ValidationError


class SegMethod(str, enum.Enum):
    PROBABILITY = "probability"
    UNIFORM = "uniform"
    DELIMITER = "delimiter"


@dataclass(frozen=True)
class SegmentationConfig:
    method: SegMethod = SegMethod.PROBABILITY
    p: float = 0.2
    M: int = 1
    delimiters: frozenset[int] = field(default_factory=frozenset)

    def __post_init__(self) -> None:
        object.__setattr__(self, "method", SegMethod(self.method))
        object.__setattr__(self, "delimiters", frozenset(int(d) for d in self.delimiters))
        if self.method is SegMethod.PROBABILITY and not 0.0 < self.p <= 1.0:
            raise ValidationError(f"threshold p must lie in (0, 1], got {self.p}")
        if self.method is SegMethod.UNIFORM and (int(self.M) != self.M or self.M < 1):
            raise ValidationError(f"segment length M must be a positive integer, got {self.M}")
        if self.method is SegMethod.DELIMITER and not self.delimiters:
            raise ValidationError("delimiter segmentation needs at least one delimiter token")


@dataclass(frozen=True)
class BoundarySet:
    """Strictly increasing boundary states in ``1..T``; always ends with ``T``."""

    positions: tuple[int, ...]
    T: int

    def __post_init__(self) -> None:
        positions = tuple(int(u) for u in self.positions)
        object.__setattr__(self, "positions", positions)
        if self.T < 1:
            raise ValidationError(f"T must be >= 1, got {self.T}")
        if not positions or positions[-1] != self.T:
            raise ValidationError("boundary set must end with the terminal position T")
        if positions[0] < 1:
            raise ValidationError(f"boundary position {positions[0]} outside [1, {self.T}]")
        if any(b <= a for a, b in zip(positions, positions[1:])):
            raise ValidationError("boundary positions must be strictly increasing")

    @classmethod
    def from_positions(cls, positions: Iterable[int], T: int) -> BoundarySet:
        """Build from an arbitrary collection of positions, appending ``T``."""
        pos = sorted({int(u) for u in positions} | {int(T)})
        bad = [u for u in pos if not 1 <= u <= T]
        if bad:
            raise ValidationError(f"boundary positions {bad} outside [1, {T}]")
        return cls(tuple(pos), int(T))

    @classmethod
    def from_mask(cls, mask: Sequence[bool]) -> BoundarySet:
        """``mask[t]`` marks state ``t + 1`` as a boundary."""
        mask = np.asarray(mask, dtype=bool)
        return cls.from_positions((np.flatnonzero(mask) + 1).tolist(), mask.size)

    def __len__(self) -> int:
        return len(self.positions)

    def __contains__(self, u: object) -> bool:
        return u in self.positions

    @property
    def array(self) -> np.ndarray:
        return np.asarray(self.positions, dtype=np.int64)

    def mask(self) -> np.ndarray:
        """Boolean array of length ``T``; entry ``t`` is set iff state ``t + 1`` is a boundary."""
        out = np.zeros(self.T, dtype=bool)
        out[self.array - 1] = True
        return out

    def mean_length(self) -> float:
        return self.T / len(self.positions)


def segment_probability(traj: Trajectory, p: float) -> BoundarySet:
    if not 0.0 < p <= 1.0:
        raise ValidationError(f"threshold p must lie in (0, 1], got {p}")
    return BoundarySet.from_mask(traj.gen_probs < p)


def segment_uniform(T: int, M: int) -> BoundarySet:
    if T < 1 or M < 1:
        raise ValidationError(f"need T >= 1 and M >= 1, got T={T}, M={M}")
    return BoundarySet.from_positions(range(M, T + 1, M), T)


def segment_delimiter(traj: Trajectory, delimiters: Iterable[int]) -> BoundarySet:
    delims = np.fromiter((int(d) for d in delimiters), dtype=np.int64)
    if delims.size == 0:
        raise ValidationError("delimiter set must be non-empty")
    return BoundarySet.from_mask(np.isin(traj.tokens, delims))


def segment(traj: Trajectory, config: SegmentationConfig) -> BoundarySet:
    if config.method is SegMethod.PROBABILITY:
        return segment_probability(traj, config.p)
    if config.method is SegMethod.UNIFORM:
        return segment_uniform(traj.T, int(config.M))
    return segment_delimiter(traj, config.delimiters)


def avg_segment_length(boundaries: Iterable[BoundarySet]) -> float:
    """Mean over trajectories of tokens per segment, ``T / |boundaries|``."""
    lengths = [b.mean_length() for b in boundaries]
    if not lengths:
        raise ValidationError("need at least one boundary set")
    return float(np.mean(lengths))


def boundary_count_histogram(boundaries: Iterable[BoundarySet]) -> dict[int, int]:
    """Number of trajectories per boundary count, sorted by count."""
    counts = Counter(len(b) for b in boundaries)
    return dict(sorted(counts.items()))
