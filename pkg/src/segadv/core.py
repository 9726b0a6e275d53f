"""Trajectory data model, TD errors and the non-segmental advantage estimators.

Indexing is 0-based throughout: action steps ``t = 0..T-1`` and states
``u = 0..T`` where state ``u`` is the prefix after ``u`` emitted tokens.
Emitting token ``t`` moves the sequence from state ``t`` to state ``t+1``.
The discount factor is fixed to 1 and the only reward is the terminal
correctness bit.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Sequence

import numpy as np


class ValidationError(ValueError):
    """Raised when an input violates a documented precondition."""


class AlignmentError(ValidationError):
    """Raised when two aligned sequences have incompatible lengths."""


class DegenerateLengthWarning(UserWarning):
    """Emitted when the adaptive-lambda schedule is clamped to zero."""


def _frozen(array: np.ndarray) -> np.ndarray:
    array.flags.writeable = False
    return array


@dataclass(frozen=True, eq=False)
class Trajectory:
    """One generated episode with a binary terminal reward.

    ``gen_probs[t]`` is the behavior policy's probability of ``tokens[t]``,
    recorded at generation time.
    """

    tokens: np.ndarray
    gen_probs: np.ndarray
    reward: float

    def __post_init__(self) -> None:
        tokens = np.array(self.tokens, dtype=np.int64).reshape(-1)
        probs = np.array(self.gen_probs, dtype=np.float64).reshape(-1)
        if tokens.size < 1:
            raise ValidationError("trajectory must contain at least one token")
        if tokens.size != probs.size:
            raise AlignmentError(
                f"tokens has length {tokens.size} but gen_probs has length {probs.size}"
            )
        if np.any(tokens < 0):
            raise ValidationError("token ids must be non-negative")
        if not np.all(np.isfinite(probs)) or np.any(probs <= 0.0) or np.any(probs > 1.0):
            raise ValidationError("gen_probs must lie in (0, 1]")
        reward = float(self.reward)
        if reward not in (0.0, 1.0):
            raise ValidationError(f"terminal reward must be 0 or 1, got {self.reward!r}")
        object.__setattr__(self, "tokens", _frozen(tokens))
        object.__setattr__(self, "gen_probs", _frozen(probs))
        object.__setattr__(self, "reward", reward)

    @property
    def T(self) -> int:
        return int(self.tokens.size)

    def __len__(self) -> int:
        return self.T

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Trajectory):
            return NotImplemented
        return (
            self.reward == other.reward
            and np.array_equal(self.tokens, other.tokens)
            and np.array_equal(self.gen_probs, other.gen_probs)
        )

    __hash__ = None  # type: ignore[assignment]


def value_series(traj: Trajectory, predicted: Sequence[float]) -> np.ndarray:
    """Build ``V(s_0..s_T)`` from predictions, pinning ``V(s_T)`` to the reward.

    ``predicted`` may have length ``T`` (pre-terminal states only) or
    ``T + 1``, in which case the last entry is discarded.
    """
    pred = np.asarray(predicted, dtype=np.float64).reshape(-1)
    if pred.size not in (traj.T, traj.T + 1):
        raise AlignmentError(
            f"expected {traj.T} or {traj.T + 1} value predictions, got {pred.size}"
        )
    values = np.empty(traj.T + 1, dtype=np.float64)
    values[: traj.T] = pred[: traj.T]
    values[traj.T] = traj.reward
    check_values(traj, values)
    return values


def check_values(traj: Trajectory, values: np.ndarray) -> np.ndarray:
    values = np.asarray(values, dtype=np.float64)
    if values.ndim != 1 or values.size != traj.T + 1:
        raise AlignmentError(
            f"value series must have length T+1={traj.T + 1}, got shape {values.shape}"
        )
    if not np.all(np.isfinite(values)):
        raise ValidationError("value series contains non-finite entries")
    if values[-1] != traj.reward:
        raise ValidationError(
            f"terminal value {values[-1]!r} is not pinned to the reward {traj.reward!r}"
        )
    return values


def compute_deltas(traj: Trajectory, values: Sequence[float]) -> np.ndarray:
    """One-step TD errors ``delta_t = V(s_{t+1}) - V(s_t)`` with the terminal value pinned."""
    values = check_values(traj, np.asarray(values, dtype=np.float64))
    return values[1:] - values[:-1]


def _check_lambda(lam: float) -> float:
    lam = float(lam)
    if not 0.0 <= lam <= 1.0:
        raise ValidationError(f"lambda must lie in [0, 1], got {lam}")
    return lam


def backward_accumulate(deltas: np.ndarray, factors: np.ndarray) -> np.ndarray:
    """``A_t = delta_t + factors[t] * A_{t+1}`` with ``A_T = 0``.

    ``factors[T-1]`` multiplies ``A_T = 0`` and therefore never matters.
    Shared by GAE, Monte Carlo and the segmental estimator so that their
    degenerate cases agree bit for bit.
    """
    deltas = np.asarray(deltas, dtype=np.float64)
    factors = np.asarray(factors, dtype=np.float64)
    if deltas.shape != factors.shape:
        raise AlignmentError(
            f"deltas has shape {deltas.shape} but factors has shape {factors.shape}"
        )
    out = np.empty_like(deltas)
    acc = 0.0
    for t in range(deltas.size - 1, -1, -1):
        acc = deltas[t] + factors[t] * acc
        out[t] = acc
    return out


def gae(deltas: Sequence[float], lam: float) -> np.ndarray:
    """Generalized advantage estimate with gamma = 1."""
    lam = _check_lambda(lam)
    deltas = np.asarray(deltas, dtype=np.float64)
    return backward_accumulate(deltas, np.full(deltas.shape, lam))


def mc_advantage(deltas: Sequence[float]) -> np.ndarray:
    """Monte Carlo advantage ``G_t - V(s_t)``; identical to ``gae(deltas, 1.0)``."""
    return gae(deltas, 1.0)


def adaptive_lambda(length: int, coeff: float = 0.2) -> float:
    """Length-dependent lambda ``1 - 1/(coeff * length)``, clamped to ``[0, 1)``."""
    if length < 1:
        raise ValidationError(f"length must be >= 1, got {length}")
    if coeff <= 0:
        raise ValidationError(f"coeff must be positive, got {coeff}")
    scale = coeff * length
    if scale <= 1.0:
        warnings.warn(
            f"adaptive lambda degenerate for length {length} (coeff*length={scale:g}); using 0",
            DegenerateLengthWarning,
            stacklevel=2,
        )
        return 0.0
    return 1.0 - 1.0 / scale


def grpo_advantages(group_rewards: Sequence[float], epsilon: float = 1e-8) -> np.ndarray:
    """Group-relative advantages ``(r_i - mean) / (std + epsilon)`` with population std."""
    rewards = np.asarray(group_rewards, dtype=np.float64).reshape(-1)
    if rewards.size < 2:
        raise ValidationError("GRPO needs a group of at least two rollouts")
    if epsilon < 0:
        raise ValidationError("epsilon must be non-negative")
    centered = rewards - rewards.mean()
    std = rewards.std()
    if std + epsilon == 0.0:
        return np.zeros_like(rewards)
    return centered / (std + epsilon)
