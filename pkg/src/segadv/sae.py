"""Segmental advantage estimation (fast recursive form).

Within a segment TD errors are summed without decay; crossing into a
boundary state multiplies the tail by ``lambda``. The slow boundary-form and
product-form evaluations live in :mod:`segadv.reference`.
"""

from __future__ import annotations

from typing import Sequence

import numpy as np

from .core import AlignmentError, Trajectory, _check_lambda, backward_accumulate, compute_deltas
from .segmentation import BoundarySet, ValidationError


def lambda_schedule(boundaries: BoundarySet, lam: float, T: int) -> np.ndarray:
    """Per-step decay factors: ``lam`` where state ``t + 1`` is a boundary, else 1."""
    lam = _check_lambda(lam)
    if boundaries.T != T:
        raise ValidationError(f"boundary set built for T={boundaries.T}, not T={T}")
    pos = boundaries.array
    if pos.min() < 1 or pos.max() > T:
        raise ValidationError(f"boundary positions must lie in [1, {T}]")
    factors = np.ones(T, dtype=np.float64)
    factors[pos - 1] = lam
    return factors


def sae_recursive(deltas: Sequence[float], schedule: Sequence[float]) -> np.ndarray:
    deltas = np.asarray(deltas, dtype=np.float64)
    schedule = np.asarray(schedule, dtype=np.float64)
    if deltas.shape != schedule.shape:
        raise AlignmentError(
            f"deltas has length {deltas.size} but the schedule has length {schedule.size}"
        )
    return backward_accumulate(deltas, schedule)


def sae(traj: Trajectory, values: Sequence[float], boundaries: BoundarySet, lam: float) -> np.ndarray:
    """Convenience wrapper: TD errors, schedule and recursion in one call."""
    deltas = compute_deltas(traj, values)
    return sae_recursive(deltas, lambda_schedule(boundaries, lam, traj.T))
