"""Desk-scale PPO on the junction environment.

The actor is the tabular softmax :class:`~segadv.env.Policy`; only junction
tokens carry gradient because corridor tokens are emitted with probability 1.
The objective is the clipped surrogate summed over the tokens of each
trajectory and averaged over the batch. No KL or entropy terms.
"""

from __future__ import annotations

import logging
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from .core import ValidationError, value_series
from .env import JunctionEnv, Policy, Rollout, exact_values, rollout
from .estimators import EstimatorKind, EstimatorSpec, estimate

log = logging.getLogger(__name__)


class TrainingDiverged(RuntimeError):
    """A parameter or advantage became non-finite."""


def ppo_surrogate(ratio: float, advantage: float, clip_epsilon: float) -> float:
    """``min(r * A, clip(r, 1 - eps, 1 + eps) * A)``; the term to maximize."""
    if ratio <= 0:
        raise ValidationError(f"importance ratio must be positive, got {ratio}")
    clipped = min(max(ratio, 1.0 - clip_epsilon), 1.0 + clip_epsilon)
    return min(ratio * advantage, clipped * advantage)


# ---------------------------------------------------------------------------
# Value head
# ---------------------------------------------------------------------------


@dataclass
class ValueHead:
    """State-value regressor over ``(position, mistake flag)``.

    ``features="tabular"`` keeps one cell per position bucket (``bucket``
    positions wide) and, if ``use_flag``, per flag value; ``bucket=1`` with
    the flag is exact. ``features="linear"`` fits a polynomial of degree
    ``degree`` in ``u / T`` per flag, which cannot represent the staircase
    shape of the true values and so leaves realistic intermediate errors.
    """

    T: int
    features: str = "linear"
    bucket: int = 1
    use_flag: bool = True
    degree: int = 1
    init: float = 0.0
    weights: np.ndarray = field(init=False, repr=False)

    def __post_init__(self) -> None:
        if self.features not in ("tabular", "linear"):
            raise ValidationError(f"unknown value features {self.features!r}")
        if self.bucket < 1 or self.degree < 0:
            raise ValidationError("bucket must be >= 1 and degree >= 0")
        n_flag = 2 if self.use_flag else 1
        if self.features == "tabular":
            n_pos = (self.T + self.bucket) // self.bucket
            self.weights = np.full((n_pos, n_flag), float(self.init))
        else:
            self.weights = np.zeros((self.degree + 1, n_flag))
            self.weights[0] = self.init

    def _split(self, states: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        states = np.asarray(states, dtype=np.int64)
        u, flag = states // 2, states % 2
        return u, (flag if self.use_flag else np.zeros_like(flag))

    def _design(self, u: np.ndarray) -> np.ndarray:
        x = u / self.T
        return x[:, None] ** np.arange(self.degree + 1)[None, :]

    def predict(self, states: Sequence[int]) -> np.ndarray:
        u, col = self._split(np.asarray(states))
        if self.features == "tabular":
            return self.weights[u // self.bucket, col]
        return np.einsum("nd,dn->n", self._design(u), self.weights[:, col])

    def fit_step(self, states: np.ndarray, targets: np.ndarray, lr: float) -> None:
        """One regression step toward ``targets`` (empirical returns)."""
        u, col = self._split(states)
        if self.features == "tabular":
            cells = (u // self.bucket) * self.weights.shape[1] + col
            flat = self.weights.reshape(-1)
            sums = np.bincount(cells, weights=targets, minlength=flat.size)
            counts = np.bincount(cells, minlength=flat.size)
            seen = counts > 0
            flat[seen] += lr * (sums[seen] / counts[seen] - flat[seen])
            return
        X = self._design(u)
        resid = np.einsum("nd,dn->n", X, self.weights[:, col]) - targets
        for c in range(self.weights.shape[1]):
            m = col == c
            if m.any():
                self.weights[:, c] -= lr * (X[m].T @ resid[m]) / m.sum()

    def copy(self) -> ValueHead:
        other = replace(self)
        other.weights = self.weights.copy()
        return other


# ---------------------------------------------------------------------------
# Batches
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class Batch:
    rollouts: tuple[Rollout, ...]
    groups: np.ndarray  # group index per rollout

    def __len__(self) -> int:
        return len(self.rollouts)

    @property
    def rewards(self) -> np.ndarray:
        return np.array([r.trajectory.reward for r in self.rollouts])

    def group_members(self, g: int) -> np.ndarray:
        return np.flatnonzero(self.groups == g)


def _children(seed: int | np.random.SeedSequence, n: int) -> list[np.random.SeedSequence]:
    ss = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
    return [np.random.SeedSequence(ss.entropy, spawn_key=(*ss.spawn_key, i)) for i in range(n)]


def collect_batch(
    env: JunctionEnv,
    policy: Policy,
    n: int,
    seed: int | np.random.SeedSequence,
    group_size: int = 8,
    threads: int = 1,
) -> Batch:
    """``n`` independent rollouts, rollout ``i`` belonging to group ``i // group_size``.

    Every rollout owns a child seed, so the batch is identical for any
    ``threads`` value.
    """
    if n < 1 or group_size < 1:
        raise ValidationError("n and group_size must be >= 1")
    seeds = _children(seed, n)
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            rollouts = tuple(pool.map(lambda s: rollout(env, policy, s), seeds))
    else:
        rollouts = tuple(rollout(env, policy, s) for s in seeds)
    return Batch(rollouts, np.arange(n) // group_size)


def batch_advantages(batch: Batch, spec: EstimatorSpec, head: ValueHead | None) -> list[np.ndarray]:
    rewards = batch.rewards
    out = []
    for i, ro in enumerate(batch.rollouts):
        if spec.kind is EstimatorKind.GRPO:
            members = batch.group_members(batch.groups[i])
            idx = int(np.searchsorted(members, i))
            out.append(estimate(ro.trajectory, None, spec,
                                group_rewards=rewards[members], group_index=idx))
        else:
            values = value_series(ro.trajectory, head.predict(ro.states[:-1]))
            out.append(estimate(ro.trajectory, values, spec))
    return out


# ---------------------------------------------------------------------------
# Surrogate and its gradient
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class JunctionSamples:
    """Per-junction view of a batch: everything the actor gradient needs."""

    actions: np.ndarray  # (N, J)
    old_probs: np.ndarray  # (N, J)
    advantages: np.ndarray  # (N, J)
    n_traj: int
    corridor_adv_sum: float  # sum of advantages on corridor tokens (ratio fixed at 1)


def junction_samples(env: JunctionEnv, batch: Batch, advantages: Sequence[np.ndarray]) -> JunctionSamples:
    steps = env.junction_steps
    acts = np.stack([ro.choices for ro in batch.rollouts])
    old = np.stack([ro.trajectory.gen_probs[steps] for ro in batch.rollouts])
    adv_all = np.stack(advantages)
    adv = adv_all[:, steps]
    corridor = float(adv_all.sum() - adv.sum())
    return JunctionSamples(acts, old, adv, len(batch), corridor)


def _probs(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def batch_surrogate(logits: np.ndarray, samples: JunctionSamples, clip_epsilon: float) -> float:
    """Clipped surrogate summed over tokens, averaged over trajectories."""
    probs = _probs(logits)
    J = logits.shape[0]
    ratio = probs[np.arange(J)[None, :], samples.actions] / samples.old_probs
    clipped = np.clip(ratio, 1.0 - clip_epsilon, 1.0 + clip_epsilon)
    terms = np.minimum(ratio * samples.advantages, clipped * samples.advantages)
    return float((terms.sum() + samples.corridor_adv_sum) / samples.n_traj)


def surrogate_grad(
    logits: np.ndarray, samples: JunctionSamples, clip_epsilon: float
) -> tuple[np.ndarray, float]:
    """Analytic gradient of :func:`batch_surrogate` w.r.t. the logits, and the clip fraction."""
    probs = _probs(logits)
    J, K = logits.shape
    rows = np.broadcast_to(np.arange(J)[None, :], samples.actions.shape)
    ratio = probs[rows, samples.actions] / samples.old_probs
    A = samples.advantages
    clipped = np.clip(ratio, 1.0 - clip_epsilon, 1.0 + clip_epsilon)
    # the clipped branch carries no gradient when it is strictly the smaller one
    active = ratio * A <= clipped * A
    coef = np.where(active, A * ratio, 0.0)  # d(r A)/d logit = A r (onehot - pi)
    grad = np.zeros((J, K))
    np.add.at(grad, (rows, samples.actions), coef)
    grad -= coef.sum(axis=0)[:, None] * probs
    clip_frac = float(np.mean(~active)) if A.size else 0.0
    return grad / samples.n_traj, clip_frac


# ---------------------------------------------------------------------------
# Training loop
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class PPOConfig:
    clip_epsilon: float = 0.2
    actor_lr: float = 30.0
    critic_lr: float = 0.5
    rollouts_per_update: int = 64
    group_size: int = 8
    epochs_per_batch: int = 1
    value_warmup_updates: int = 10
    estimator: EstimatorSpec = field(default_factory=lambda: EstimatorSpec(EstimatorKind.GAE, 1.0))
    seed: int = 0
    max_updates: int = 300
    value_features: str = "linear"
    value_bucket: int = 1
    value_use_flag: bool = True
    value_degree: int = 1
    target_success: float = 0.9
    stop_at_target: bool = False

    def __post_init__(self) -> None:
        if not 0.0 < self.clip_epsilon < 1.0:
            raise ValidationError("clip_epsilon must lie in (0, 1)")
        if self.actor_lr <= 0 or self.critic_lr <= 0:
            raise ValidationError("learning rates must be positive")
        if self.group_size < 2:
            raise ValidationError("group_size must be >= 2")
        if self.rollouts_per_update < 1 or self.rollouts_per_update % self.group_size:
            raise ValidationError("rollouts_per_update must be a positive multiple of group_size")
        if self.epochs_per_batch < 1 or self.max_updates < 1 or self.value_warmup_updates < 0:
            raise ValidationError("epochs_per_batch and max_updates must be >= 1")

    def make_value_head(self, T: int) -> ValueHead:
        return ValueHead(
            T,
            features=self.value_features,
            bucket=self.value_bucket,
            use_flag=self.value_use_flag,
            degree=self.value_degree,
        )


METRIC_COLUMNS = (
    "update",
    "success_rate",
    "expected_success",
    "mean_advantage",
    "value_mse",
    "clip_fraction",
    "policy_entropy",
)


@dataclass
class TrainMetrics:
    rows: list[dict[str, float]] = field(default_factory=list)
    wall_clock: list[float] = field(default_factory=list)
    policy: Policy | None = None
    value_head: ValueHead | None = None

    def steps_to_threshold(self, threshold: float, column: str = "expected_success") -> int | None:
        """Number of updates until ``column`` first reaches ``threshold``."""
        for row in self.rows:
            if row[column] >= threshold:
                return int(row["update"]) + 1
        return None

    def column(self, name: str) -> np.ndarray:
        return np.array([r[name] for r in self.rows])


def value_targets(batch: Batch) -> tuple[np.ndarray, np.ndarray]:
    """Visited non-terminal states and their undiscounted terminal returns."""
    states = np.concatenate([ro.states[:-1] for ro in batch.rollouts])
    targets = np.concatenate(
        [np.full(ro.trajectory.T, ro.trajectory.reward) for ro in batch.rollouts]
    )
    return states, targets


def _phase_seed(seed: int, phase: int, k: int) -> np.random.SeedSequence:
    return np.random.SeedSequence(seed, spawn_key=(phase, k))


_WARMUP, _UPDATE = 0, 1


def warmup_value_head(
    env: JunctionEnv, policy: Policy, head: ValueHead, config: PPOConfig, threads: int = 1
) -> None:
    """Critic-only regression on rollouts of the frozen initial policy."""
    for k in range(config.value_warmup_updates):
        batch = collect_batch(env, policy, config.rollouts_per_update,
                              _phase_seed(config.seed, _WARMUP, k), config.group_size, threads)
        head.fit_step(*value_targets(batch), config.critic_lr)
        if not np.all(np.isfinite(head.weights)):
            raise TrainingDiverged(f"non-finite value weights at warm-up step {k}")


def train(
    env: JunctionEnv,
    config: PPOConfig,
    policy: Policy | None = None,
    threads: int = 1,
) -> TrainMetrics:
    policy = Policy.uniform(env) if policy is None else policy
    head = config.make_value_head(env.T)
    warmup_value_head(env, policy, head, config, threads)
    metrics = TrainMetrics()
    logits = np.array(policy.logits)
    for k in range(config.max_updates):
        start = time.perf_counter()
        batch = collect_batch(env, policy, config.rollouts_per_update,
                              _phase_seed(config.seed, _UPDATE, k), config.group_size, threads)
        advantages = batch_advantages(batch, config.estimator, head)
        samples = junction_samples(env, batch, advantages)
        if not np.all(np.isfinite(samples.advantages)):
            raise TrainingDiverged(f"non-finite advantage at update {k}")

        clip_frac = 0.0
        for _ in range(config.epochs_per_batch):
            grad, clip_frac = surrogate_grad(logits, samples, config.clip_epsilon)
            logits = logits + config.actor_lr * grad
        if not np.all(np.isfinite(logits)):
            raise TrainingDiverged(f"non-finite policy logits at update {k}: {logits}")

        states, targets = value_targets(batch)
        truth = exact_values(env, policy).reshape(-1)[states]
        value_mse = float(np.mean((head.predict(states) - truth) ** 2))
        head.fit_step(states, targets, config.critic_lr)
        if not np.all(np.isfinite(head.weights)):
            raise TrainingDiverged(f"non-finite value weights at update {k}")

        policy = Policy(logits)
        metrics.rows.append({
            "update": k,
            "success_rate": float(batch.rewards.mean()),
            "expected_success": float(np.prod(policy.correct_probs(env))),
            "mean_advantage": float(np.mean(np.concatenate(advantages))),
            "value_mse": value_mse,
            "clip_fraction": clip_frac,
            "policy_entropy": float(policy.entropy().mean()),
        })
        metrics.wall_clock.append(time.perf_counter() - start)
        log.debug("update %d: %s", k, metrics.rows[-1])
        if config.stop_at_target and metrics.rows[-1]["expected_success"] >= config.target_success:
            break
    metrics.policy = policy
    metrics.value_head = head
    return metrics




# ---------------------------------------------------------------------------
# Sample-efficiency comparison
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class EfficiencyRow:
    estimator: str
    seed: int
    steps_to_threshold: int | None  # None when the budget ran out first
    final_expected_success: float


def sample_efficiency(
    env: JunctionEnv,
    base: PPOConfig,
    estimators: dict[str, EstimatorSpec],
    seeds: Sequence[int],
    budget: int,
    threads: int = 1,
) -> list[EfficiencyRow]:
    """Updates needed to reach ``base.target_success`` per estimator and seed."""
    rows = []
    for name, spec in estimators.items():
        for seed in seeds:
            cfg = replace(base, estimator=spec, seed=seed, max_updates=budget, stop_at_target=True)
            m = train(env, cfg, threads=threads)
            rows.append(EfficiencyRow(name, seed, m.steps_to_threshold(base.target_success),
                                      m.rows[-1]["expected_success"]))
    return rows


__all__ = [
    "Batch",
    "JunctionSamples",
    "METRIC_COLUMNS",
    "PPOConfig",
    "TrainMetrics",
    "TrainingDiverged",
    "ValueHead",
    "batch_advantages",
    "batch_surrogate",
    "EfficiencyRow",
    "collect_batch",
    "sample_efficiency",
    "junction_samples",
    "ppo_surrogate",
    "surrogate_grad",
    "train",
    "value_targets",
    "warmup_value_head",
]
