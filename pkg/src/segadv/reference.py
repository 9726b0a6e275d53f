"""Slow reference evaluations of the segmental estimator.

These are kept in the library as executable statements of the equivalence
between the boundary-weighted form, the product form and the recursion in
:mod:`segadv.sae`. Use them as oracles, not in training loops.
"""

from __future__ import annotations

from typing import Sequence

import numpy as np

from .core import AlignmentError, _check_lambda
from .segmentation import BoundarySet, ValidationError


def boundary_weights(boundaries: BoundarySet, t: int, lam: float) -> tuple[np.ndarray, np.ndarray]:
    """Bootstrap targets after ``t`` and their mixture weights.

    Returns ``(targets, weights)`` where ``targets`` are the boundary states
    strictly after ``t`` (the last one is ``T``). Interior boundaries get
    ``(1 - lam) * lam**k`` for ``k = 0, 1, ...``; the terminal target gets
    ``lam**(number of interior targets)``. When ``T`` is the first boundary
    after ``t`` the terminal weight is ``lam**0 = 1``.
    """
    lam = _check_lambda(lam)
    pos = boundaries.array
    if not 0 <= t < boundaries.T:
        raise ValidationError(f"t must lie in [0, {boundaries.T - 1}], got {t}")
    targets = pos[np.searchsorted(pos, t, side="right"):]
    n_interior = targets.size - 1
    weights = np.empty(targets.size, dtype=np.float64)
    weights[:n_interior] = (1.0 - lam) * lam ** np.arange(n_interior, dtype=np.float64)
    weights[n_interior] = lam ** n_interior
    return targets, weights


def sae_boundary_form(values: Sequence[float], boundaries: BoundarySet, lam: float) -> np.ndarray:
    """Mixture of multi-step advantages bootstrapped only at boundary states.

    Builds the ``T x |B|`` weight matrix of :func:`boundary_weights` in one
    pass: row ``t`` holds the weights on the boundary targets after ``t``.
    """
    lam = _check_lambda(lam)
    values = np.asarray(values, dtype=np.float64)
    T = boundaries.T
    if values.size != T + 1:
        raise AlignmentError(f"values must have length T+1={T + 1}, got {values.size}")
    pos = boundaries.array
    first = np.searchsorted(pos, np.arange(T), side="right")  # first target index per t
    rank = np.arange(pos.size)[None, :] - first[:, None]  # k for each (t, target)
    n_interior = pos.size - 1 - first
    k = np.clip(rank, 0, None).astype(np.float64)
    W = np.where(rank >= 0, (1.0 - lam) * lam ** k, 0.0)
    W[:, -1] = lam ** n_interior.astype(np.float64)
    return W @ values[pos] - W.sum(axis=1) * values[:T]


def product_coefficients(schedule: Sequence[float]) -> np.ndarray:
    """Matrix ``C[t, t + l] = prod_{i < l} schedule[t + i]`` (upper triangular)."""
    f = np.asarray(schedule, dtype=np.float64)
    T = f.size
    C = np.zeros((T, T), dtype=np.float64)
    for t in range(T):
        C[t, t] = 1.0
        C[t, t + 1:] = np.cumprod(f[t:T - 1])
    return C


def sae_product_form(deltas: Sequence[float], schedule: Sequence[float]) -> np.ndarray:
    """Direct double sum over TD errors weighted by running schedule products. O(T^2)."""
    deltas = np.asarray(deltas, dtype=np.float64)
    schedule = np.asarray(schedule, dtype=np.float64)
    if deltas.shape != schedule.shape:
        raise AlignmentError(
            f"deltas has length {deltas.size} but the schedule has length {schedule.size}"
        )
    return product_coefficients(schedule) @ deltas
