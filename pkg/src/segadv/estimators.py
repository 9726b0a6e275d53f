"""Estimator selection and the single dispatch entry point."""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .core import (
    Trajectory,
    ValidationError,
    adaptive_lambda,
    compute_deltas,
    gae,
    grpo_advantages,
    mc_advantage,
)
from .sae import lambda_schedule, sae_recursive
from .segmentation import SegmentationConfig, segment


class EstimatorKind(str, enum.Enum):
    GAE = "gae"
    SAE = "sae"
    MC = "mc"
    ADAPTIVE_LAMBDA = "adaptive"
    GRPO = "grpo"


@dataclass(frozen=True)
class EstimatorSpec:
    kind: EstimatorKind = EstimatorKind.GAE
    lam: float = 1.0
    segmentation: SegmentationConfig | None = None
    adaptive_coeff: float = 0.2
    grpo_epsilon: float = 1e-8

    def __post_init__(self) -> None:
        object.__setattr__(self, "kind", EstimatorKind(self.kind))
        if not 0.0 <= self.lam <= 1.0:
            raise ValidationError(f"lambda must lie in [0, 1], got {self.lam}")
        if self.kind is EstimatorKind.SAE and self.segmentation is None:
            raise ValidationError("SAE estimator requires a segmentation config")
        if self.adaptive_coeff <= 0:
            raise ValidationError("adaptive_coeff must be positive")

    @property
    def needs_values(self) -> bool:
        return self.kind is not EstimatorKind.GRPO

    @property
    def label(self) -> str:
        if self.kind is EstimatorKind.GAE:
            return f"gae(lambda={self.lam:g})"
        if self.kind is EstimatorKind.SAE:
            seg = self.segmentation
            param = {"probability": f"p={seg.p:g}", "uniform": f"M={seg.M}"}.get(
                seg.method.value, "delimiter"
            )
            return f"sae({param},lambda={self.lam:g})"
        if self.kind is EstimatorKind.ADAPTIVE_LAMBDA:
            return f"adaptive(coeff={self.adaptive_coeff:g})"
        return self.kind.value


def estimate(
    traj: Trajectory,
    values: Sequence[float] | None,
    spec: EstimatorSpec,
    *,
    group_rewards: Sequence[float] | None = None,
    group_index: int | None = None,
) -> np.ndarray:
    """Per-token advantages for one trajectory.

    GRPO ignores ``values`` and needs the rewards of the trajectory's group
    plus its index within that group; the normalized scalar is broadcast to
    every token.
    """
    if spec.kind is EstimatorKind.GRPO:
        if group_rewards is None or group_index is None:
            raise ValidationError("GRPO needs group_rewards and group_index")
        scalar = grpo_advantages(group_rewards, spec.grpo_epsilon)[group_index]
        return np.full(traj.T, scalar, dtype=np.float64)
    if values is None:
        raise ValidationError(f"{spec.kind.value} estimator needs a value series")
    deltas = compute_deltas(traj, values)
    if spec.kind is EstimatorKind.GAE:
        return gae(deltas, spec.lam)
    if spec.kind is EstimatorKind.MC:
        return mc_advantage(deltas)
    if spec.kind is EstimatorKind.ADAPTIVE_LAMBDA:
        return gae(deltas, adaptive_lambda(traj.T, spec.adaptive_coeff))
    boundaries = segment(traj, spec.segmentation)
    return sae_recursive(deltas, lambda_schedule(boundaries, spec.lam, traj.T))
