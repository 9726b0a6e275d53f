"""Numerical checks of the SAE bias bound under uniform segmentation.

Value predictions are modelled as ``V = V* + eps`` with an error envelope
``|eps(s_t)| <= alpha * exp((T - t) / beta)`` and ``eps(s_T) = 0``. The bias
of the t=0 segmental advantage only depends on ``eps`` at ``s_0`` and at the
interior boundaries ``s_M, s_2M, ...``.
"""

from __future__ import annotations

import enum
import itertools
import math
from dataclasses import dataclass
from typing import Iterable, Iterator, Sequence

import numpy as np

from .core import Trajectory, ValidationError, _check_lambda, compute_deltas
from .sae import lambda_schedule, sae_recursive
from .segmentation import segment_uniform


class SignPattern(str, enum.Enum):
    WORST_CASE = "worst_case"
    RANDOM = "random"
    ALTERNATING = "alternating"


class BoundViolation(AssertionError):
    """The measured bias exceeded the closed-form bound."""


@dataclass(frozen=True)
class ValueErrorModel:
    alpha: float
    beta: float
    pattern: SignPattern = SignPattern.WORST_CASE
    seed: int = 0

    def __post_init__(self) -> None:
        object.__setattr__(self, "pattern", SignPattern(self.pattern))
        if self.alpha <= 0 or self.beta <= 0:
            raise ValidationError("alpha and beta must be positive")

    def envelope(self, T: int) -> np.ndarray:
        return self.alpha * np.exp((T - np.arange(T + 1)) / self.beta)


@dataclass(frozen=True)
class BiasReport:
    T: int
    M: int
    lam: float
    alpha: float
    beta: float
    pattern: str
    seed: int
    empirical_bias: float
    bound: float

    @property
    def slack(self) -> float:
        return self.bound - abs(self.empirical_bias)


def _check_divides(T: int, M: int) -> None:
    if T < 1 or M < 1:
        raise ValidationError(f"need T >= 1 and M >= 1, got T={T}, M={M}")
    if T % M:
        raise ValidationError(f"segment length M={M} must divide the horizon T={T}")


def bias_bound(alpha: float, beta: float, T: int, M: int, lam: float) -> float:
    """``alpha e^{T/beta} [1 + (1 - lam) / (e^{M/beta} - lam)]``."""
    if alpha <= 0 or beta <= 0:
        raise ValidationError("alpha and beta must be positive")
    _check_divides(T, M)
    lam = _check_lambda(lam)
    return alpha * math.exp(T / beta) * (1.0 + (1.0 - lam) / (math.exp(M / beta) - lam))


def sample_errors(model: ValueErrorModel, T: int) -> np.ndarray:
    """Value errors ``eps(s_0..s_T)`` inside the envelope, with ``eps(s_T) = 0``.

    WORST_CASE puts ``-envelope`` at ``s_0`` and ``+envelope`` everywhere
    else, which makes every term of the telescoped bias add up with the same
    sign. RANDOM draws ``u_t`` uniformly from ``[-1, 1]``. ALTERNATING uses
    ``(-1)**(t+1)`` so ``s_0`` is negative.
    """
    env = model.envelope(T)
    if model.pattern is SignPattern.WORST_CASE:
        u = np.ones(T + 1)
        u[0] = -1.0
    elif model.pattern is SignPattern.ALTERNATING:
        u = np.where(np.arange(T + 1) % 2 == 0, -1.0, 1.0)
    else:
        u = np.random.default_rng(model.seed).uniform(-1.0, 1.0, size=T + 1)
    eps = env * u
    eps[T] = 0.0
    return eps


def _a0_uniform(values: np.ndarray, reward: float, M: int, lam: float) -> float:
    T = values.size - 1
    traj = Trajectory(np.zeros(T, dtype=np.int64), np.ones(T), reward)
    deltas = compute_deltas(traj, values)
    return float(sae_recursive(deltas, lambda_schedule(segment_uniform(T, M), lam, T))[0])


def default_true_values(T: int) -> np.ndarray:
    """``V* = 0`` everywhere except the pinned terminal value 1."""
    v = np.zeros(T + 1)
    v[T] = 1.0
    return v


def telescoped_bias(eps: Sequence[float], M: int, lam: float) -> float:
    """``-eps(s_0) + sum_{k=1}^{T/M-1} lam^{k-1} (1 - lam) eps(s_{kM})``."""
    eps = np.asarray(eps, dtype=np.float64)
    T = eps.size - 1
    _check_divides(T, M)
    n = T // M
    k = np.arange(1, n)
    return float(-eps[0] + np.sum(lam ** (k - 1.0) * (1.0 - lam) * eps[k * M]))


def empirical_bias(
    T: int,
    M: int,
    lam: float,
    model: ValueErrorModel,
    true_values: Sequence[float] | None = None,
    *,
    eps: Sequence[float] | None = None,
) -> BiasReport:
    """Bias of the t=0 SAE estimate when ``V*`` is replaced by ``V* + eps``.

    ``eps`` defaults to :func:`sample_errors`; passing it explicitly skips
    the envelope sampling but the bound check still applies.
    """
    _check_divides(T, M)
    lam = _check_lambda(lam)
    v_true = default_true_values(T) if true_values is None else np.asarray(true_values, float)
    if v_true.size != T + 1:
        raise ValidationError(f"true values must have length T+1={T + 1}")
    eps = sample_errors(model, T) if eps is None else np.asarray(eps, dtype=np.float64)
    if eps[T] != 0.0:
        raise ValidationError("value error at the terminal state must be zero")
    reward = float(v_true[T])
    bias = _a0_uniform(v_true + eps, reward, M, lam) - _a0_uniform(v_true, reward, M, lam)
    bound = bias_bound(model.alpha, model.beta, T, M, lam)
    report = BiasReport(
        T=T,
        M=M,
        lam=lam,
        alpha=model.alpha,
        beta=model.beta,
        pattern=model.pattern.value,
        seed=model.seed,
        empirical_bias=bias,
        bound=bound,
    )
    if abs(bias) > bound + 1e-9:
        raise BoundViolation(
            f"|bias|={abs(bias):.12g} exceeds bound {bound:.12g} at T={T}, M={M}, lambda={lam}"
        )
    return report


def divisors(n: int) -> list[int]:
    return [d for d in range(1, n + 1) if n % d == 0]


@dataclass(frozen=True)
class BiasGrid:
    T: Sequence[int] = (24,)
    M: Sequence[int] | None = None
    lam: Sequence[float] = (0.5, 0.9, 0.99)
    alpha: Sequence[float] = (1.0,)
    beta: Sequence[float] = (4.0, 8.0, 16.0)
    patterns: Sequence[SignPattern] = tuple(SignPattern)
    n_seeds: int = 200
    seed: int = 0

    def configurations(self) -> Iterator[tuple[int, int, float, float, float, SignPattern]]:
        for T in self.T:
            Ms = divisors(T) if self.M is None else [m for m in self.M if T % m == 0]
            for M, lam, alpha, beta, pattern in itertools.product(
                Ms, self.lam, self.alpha, self.beta, self.patterns
            ):
                yield T, M, lam, alpha, beta, SignPattern(pattern)


def run_grid(grid: BiasGrid) -> Iterator[tuple[BiasReport, float]]:
    """Yield ``(report, telescoped_bias)`` for every grid point and seed.

    Seeds are ``grid.seed + i`` so each configuration owns its random source
    and the output does not depend on evaluation order.
    """
    for T, M, lam, alpha, beta, pattern in grid.configurations():
        for i in range(grid.n_seeds):
            model = ValueErrorModel(alpha, beta, pattern, seed=grid.seed + i)
            eps = sample_errors(model, T)
            report = empirical_bias(T, M, lam, model, eps=eps)
            yield report, telescoped_bias(eps, M, lam)


BIAS_CSV_COLUMNS = (
    "T", "M", "lambda", "alpha", "beta", "pattern", "seed", "empirical_bias", "bound", "slack",
)


def report_row(report: BiasReport) -> list[object]:
    return [
        report.T,
        report.M,
        report.lam,
        report.alpha,
        report.beta,
        report.pattern,
        report.seed,
        report.empirical_bias,
        report.bound,
        report.slack,
    ]


def per_step_bias(T: int, M: int, lam: float, eps: Iterable[float]) -> np.ndarray:
    """Bias of every ``A_t`` (not only t=0); supplementary, no bound applies."""
    eps = np.asarray(list(eps), dtype=np.float64)
    v_true = default_true_values(T)
    traj = Trajectory(np.zeros(T, dtype=np.int64), np.ones(T), 1.0)
    sched = lambda_schedule(segment_uniform(T, M), lam, T)
    noisy = sae_recursive(compute_deltas(traj, v_true + eps), sched)
    clean = sae_recursive(compute_deltas(traj, v_true), sched)
    return noisy - clean
