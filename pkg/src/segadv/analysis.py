"""Correlation of advantage estimators with a segment-level ground truth.

For a sampled segment ``[t, t + m)`` of a trajectory the reference
advantage is ``A* = V*(s_{t+m}) - V*(s_t)``, assigned to every token in the
segment. ``V*`` comes either from exact dynamic programming on the junction
environment or from Monte Carlo continuations. Each estimator's per-token
advantages are then correlated with the broadcast ``A*``.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .core import ValidationError
from .env import JunctionEnv, Policy, Rollout, exact_values, mc_value
from .estimators import EstimatorKind, EstimatorSpec
from .segmentation import SegmentationConfig
from .trainer import Batch, ValueHead, batch_advantages, collect_batch, value_targets


class UndefinedCorrelation(ValueError):
    """Pearson correlation is undefined because an input is constant."""


class Oracle(str, enum.Enum):
    EXACT = "dp"
    MC = "mc"


def pearson(xs: Sequence[float], ys: Sequence[float]) -> float:
    x = np.asarray(xs, dtype=np.float64)
    y = np.asarray(ys, dtype=np.float64)
    if x.shape != y.shape or x.ndim != 1:
        raise ValidationError("pearson needs two 1-D sequences of equal length")
    if x.size < 2:
        raise ValidationError("pearson needs at least two points")
    dx = x - x.mean()
    dy = y - y.mean()
    sxx = float(dx @ dx)
    syy = float(dy @ dy)
    if sxx == 0.0 or syy == 0.0:
        raise UndefinedCorrelation("correlation undefined for a constant vector")
    r = float(dx @ dy) / math.sqrt(sxx * syy)
    return min(1.0, max(-1.0, r))


@dataclass(frozen=True)
class GroundTruthSegment:
    traj: int
    start: int
    end: int
    v_start: float
    v_end: float
    se_start: float = 0.0
    se_end: float = 0.0

    def __post_init__(self) -> None:
        if not 0 <= self.start < self.end:
            raise ValidationError(f"invalid segment [{self.start}, {self.end})")

    @property
    def a_star(self) -> float:
        return self.v_end - self.v_start

    @property
    def m(self) -> int:
        return self.end - self.start


@dataclass(frozen=True)
class SegmentSampler:
    """Draws ``t`` uniformly from ``0..T-1`` then ``m`` uniformly from ``1..T-t``.

    Without ``overlap`` a draw that intersects an earlier segment of the same
    trajectory is rejected and redrawn (up to ``max_tries`` times).
    """

    per_traj: int = 1
    overlap: bool = False
    max_tries: int = 100

    def sample(self, T: int, rng: np.random.Generator) -> list[tuple[int, int]]:
        taken = np.zeros(T, dtype=bool)
        out: list[tuple[int, int]] = []
        for _ in range(self.per_traj):
            for _ in range(self.max_tries):
                t = int(rng.integers(0, T))
                m = int(rng.integers(1, T - t + 1))
                if self.overlap or not taken[t:t + m].any():
                    taken[t:t + m] = True
                    out.append((t, t + m))
                    break
        return sorted(out)


def ground_truth_advantages(
    env: JunctionEnv,
    policy: Policy,
    rollouts: Sequence[Rollout],
    sampler: SegmentSampler,
    seed: int | np.random.SeedSequence,
    oracle: Oracle | str = Oracle.EXACT,
    mc_rollouts: int = 32,
    spans: Sequence[Sequence[tuple[int, int]]] | None = None,
) -> list[GroundTruthSegment]:
    """Sample segments and evaluate ``V*`` at both ends with the chosen oracle.

    ``spans`` overrides the sampler with explicit ``(start, end)`` pairs per
    rollout, which lets two oracles be compared on identical segments.
    """
    oracle = Oracle(oracle)
    ss = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
    seg_rng = np.random.default_rng(np.random.SeedSequence(ss.entropy, spawn_key=(*ss.spawn_key, 0)))
    table = exact_values(env, policy).reshape(-1)
    segments: list[GroundTruthSegment] = []
    for i, ro in enumerate(rollouts):
        pairs = sampler.sample(ro.trajectory.T, seg_rng) if spans is None else spans[i]
        for j, (t, end) in enumerate(pairs):
            s0, s1 = ro.states[t], ro.states[end]
            if oracle is Oracle.EXACT:
                segments.append(GroundTruthSegment(i, t, end, table[s0], table[s1]))
                continue
            key = (*ss.spawn_key, 1, i, j)
            v0, e0 = mc_value(env, policy, int(s0), mc_rollouts,
                              np.random.SeedSequence(ss.entropy, spawn_key=(*key, 0)))
            v1, e1 = mc_value(env, policy, int(s1), mc_rollouts,
                              np.random.SeedSequence(ss.entropy, spawn_key=(*key, 1)))
            segments.append(GroundTruthSegment(i, t, end, v0, v1, e0, e1))
    return segments


def broadcast_points(
    segments: Iterable[GroundTruthSegment], advantages: Sequence[np.ndarray]
) -> tuple[np.ndarray, np.ndarray]:
    """Pair every token inside a segment with that segment's ``A*``."""
    est, ref = [], []
    for seg in segments:
        est.append(advantages[seg.traj][seg.start:seg.end])
        ref.append(np.full(seg.m, seg.a_star))
    return np.concatenate(est), np.concatenate(ref)


# ---------------------------------------------------------------------------
# Study
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class StudyEstimator:
    name: str  # estimator family, e.g. "sae", "gae"
    param: str  # swept parameter as text, e.g. "p=0.5", "lambda=0.3"
    spec: EstimatorSpec


@dataclass(frozen=True)
class CorrelationRow:
    estimator: str
    param: str
    seed: int
    pearson_r: float  # nan when undefined
    n_points: int


@dataclass(frozen=True)
class CorrelationReport:
    estimator: str
    param: str
    oracle: str
    pearson_r: float
    se: float
    n_seeds: int
    n_points: int
    n_missing: int


def default_estimators(
    lambdas: Sequence[float] = tuple(round(0.1 * i, 1) for i in range(11)),
    ps: Sequence[float] = (0.5,),
    sae_lambda: float = 0.95,
) -> list[StudyEstimator]:
    out = [
        StudyEstimator("sae", f"p={p:g}", EstimatorSpec(EstimatorKind.SAE, sae_lambda,
                                                        SegmentationConfig("probability", p=p)))
        for p in ps
    ]
    out += [StudyEstimator("gae", f"lambda={lam:g}", EstimatorSpec(EstimatorKind.GAE, lam))
            for lam in lambdas]
    out.append(StudyEstimator("mc", "", EstimatorSpec(EstimatorKind.MC)))
    out.append(StudyEstimator("adaptive", "coeff=0.2", EstimatorSpec(EstimatorKind.ADAPTIVE_LAMBDA)))
    out.append(StudyEstimator("grpo", "", EstimatorSpec(EstimatorKind.GRPO)))
    return out


def fit_value_head(
    env: JunctionEnv,
    policy: Policy,
    head: ValueHead,
    updates: int,
    rollouts_per_update: int,
    lr: float,
    seed: int,
) -> ValueHead:
    """Regress ``head`` on returns of ``policy``; the capacity limit stays."""
    for k in range(updates):
        batch = collect_batch(env, policy, rollouts_per_update,
                              np.random.SeedSequence(seed, spawn_key=(2, k)))
        head.fit_step(*value_targets(batch), lr)
    return head


class NoisyValues:
    """Exact values plus a fixed per-state error ``alpha * exp((T - u) / beta) * z``.

    ``z`` is standard normal per state id, drawn once from ``seed``; the
    terminal value is pinned downstream, so its error never matters.
    """

    def __init__(self, env: JunctionEnv, policy: Policy, alpha: float, beta: float, seed: int):
        table = exact_values(env, policy).reshape(-1)
        u = np.arange(table.size) // 2
        z = np.random.default_rng(seed).standard_normal(table.size)
        self.table = table + alpha * np.exp((env.T - u) / beta) * z

    def predict(self, states: Sequence[int]) -> np.ndarray:
        return self.table[np.asarray(states, dtype=np.int64)]


def study_seed(
    env: JunctionEnv,
    policy: Policy,
    head: ValueHead | NoisyValues,
    estimators: Sequence[StudyEstimator],
    sampler: SegmentSampler,
    seed: int,
    n_traj: int = 64,
    group_size: int = 8,
    oracle: Oracle | str = Oracle.EXACT,
    mc_rollouts: int = 32,
) -> list[CorrelationRow]:
    batch: Batch = collect_batch(env, policy, n_traj, np.random.SeedSequence(seed, spawn_key=(0,)),
                                 group_size)
    segments = ground_truth_advantages(env, policy, batch.rollouts, sampler,
                                       np.random.SeedSequence(seed, spawn_key=(1,)),
                                       oracle, mc_rollouts)
    rows = []
    for est in estimators:
        advantages = batch_advantages(batch, est.spec, head)
        xs, ys = broadcast_points(segments, advantages)
        try:
            r = pearson(xs, ys)
        except UndefinedCorrelation:
            r = float("nan")
        rows.append(CorrelationRow(est.name, est.param, seed, r, int(xs.size)))
    return rows


def correlation_study(
    env: JunctionEnv,
    policy: Policy,
    head: ValueHead | NoisyValues,
    estimators: Sequence[StudyEstimator],
    sampler: SegmentSampler,
    seeds: Sequence[int],
    n_traj: int = 64,
    group_size: int = 8,
    oracle: Oracle | str = Oracle.EXACT,
    mc_rollouts: int = 32,
) -> tuple[list[CorrelationRow], list[CorrelationReport]]:
    """Per-seed correlations and their across-seed mean with standard error."""
    rows: list[CorrelationRow] = []
    for seed in sorted(seeds):
        rows += study_seed(env, policy, head, estimators, sampler, seed, n_traj, group_size,
                           oracle, mc_rollouts)
    return rows, summarize(rows, Oracle(oracle).value)


def summarize(rows: Sequence[CorrelationRow], oracle: str) -> list[CorrelationReport]:
    keys: list[tuple[str, str]] = []
    for row in rows:
        if (row.estimator, row.param) not in keys:
            keys.append((row.estimator, row.param))
    reports = []
    for name, param in keys:
        sel = [r for r in rows if r.estimator == name and r.param == param]
        vals = np.array([r.pearson_r for r in sel])
        ok = vals[np.isfinite(vals)]
        mean = float(ok.mean()) if ok.size else float("nan")
        se = float(ok.std(ddof=1) / math.sqrt(ok.size)) if ok.size > 1 else float("nan")
        reports.append(CorrelationReport(name, param, oracle, mean, se, len(sel),
                                         sum(r.n_points for r in sel), int(vals.size - ok.size)))
    return reports
