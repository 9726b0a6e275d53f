"""Corridor-and-junction token MDP.

An episode is ``C`` forced corridor tokens, then a ``K``-way junction,
repeated for ``J`` junctions, followed by a final corridor of ``C`` tokens::

    [corridor C] J0 [corridor C] J1 ... J_{J-1} [corridor C]

so ``T = J * (C + 1) + C`` for every policy. Junction tokens are the choice
ids ``0..K-1``; the corridor token at offset ``c`` inside any corridor is
``K + c``. The reward is 1 iff every junction choice matches
``correct[i]``.

A state is ``(u, flag)``: ``u`` tokens emitted so far and whether a wrong
choice has already been made. It is encoded as the integer ``2 * u + flag``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .core import Trajectory, ValidationError


def state_id(u: int | np.ndarray, flag: int | np.ndarray) -> int | np.ndarray:
    return 2 * u + flag


def decode_state(sid: int) -> tuple[int, int]:
    return int(sid) // 2, int(sid) % 2


@dataclass(frozen=True)
class JunctionEnv:
    num_junctions: int
    corridor_len: int
    choices: int
    correct: tuple[int, ...] = field(default=())

    def __post_init__(self) -> None:
        if self.num_junctions < 1:
            raise ValidationError("need at least one junction")
        if self.corridor_len < 0:
            raise ValidationError("corridor length must be non-negative")
        if self.choices < 2:
            raise ValidationError("junctions need at least two choices")
        correct = tuple(int(c) for c in self.correct) or (0,) * self.num_junctions
        if len(correct) != self.num_junctions or not all(0 <= c < self.choices for c in correct):
            raise ValidationError(f"invalid correct choices {correct}")
        object.__setattr__(self, "correct", correct)

    @classmethod
    def from_seed(cls, junctions: int, corridor_len: int, choices: int, correct_seed: int) -> JunctionEnv:
        rng = np.random.default_rng(correct_seed)
        correct = tuple(int(c) for c in rng.integers(choices, size=junctions))
        return cls(junctions, corridor_len, choices, correct)

    @property
    def T(self) -> int:
        return self.num_junctions * (self.corridor_len + 1) + self.corridor_len

    @property
    def n_states(self) -> int:
        return 2 * (self.T + 1)

    @property
    def junction_steps(self) -> np.ndarray:
        """Action step at which each junction choice is emitted."""
        C = self.corridor_len
        return C + np.arange(self.num_junctions) * (C + 1)

    def corridor_tokens(self) -> np.ndarray:
        """Token emitted at every step, with -1 at junction steps."""
        C = self.corridor_len
        tokens = self.choices + (np.arange(self.T) % (C + 1))
        tokens[self.junction_steps] = -1
        return tokens

    def remaining_junctions(self, u: int) -> np.ndarray:
        """Indices of junctions not yet decided at state ``u``."""
        return np.flatnonzero(self.junction_steps >= u)


@dataclass(frozen=True, eq=False)
class Policy:
    """Tabular softmax policy: one row of logits per junction."""

    logits: np.ndarray

    def __post_init__(self) -> None:
        logits = np.array(self.logits, dtype=np.float64)
        if logits.ndim != 2:
            raise ValidationError("policy logits must be a (junctions, choices) array")
        logits.flags.writeable = False
        object.__setattr__(self, "logits", logits)

    @classmethod
    def uniform(cls, env: JunctionEnv) -> Policy:
        return cls(np.zeros((env.num_junctions, env.choices)))

    @classmethod
    def with_correct_prob(cls, env: JunctionEnv, q: float) -> Policy:
        """Mass ``q`` on each correct choice, the rest spread uniformly."""
        if not 0.0 < q < 1.0:
            raise ValidationError("q must lie strictly between 0 and 1")
        K = env.choices
        probs = np.full((env.num_junctions, K), (1.0 - q) / (K - 1))
        probs[np.arange(env.num_junctions), env.correct] = q
        return cls(np.log(probs))

    def probs(self) -> np.ndarray:
        z = self.logits - self.logits.max(axis=1, keepdims=True)
        e = np.exp(z)
        return e / e.sum(axis=1, keepdims=True)

    def correct_probs(self, env: JunctionEnv) -> np.ndarray:
        return self.probs()[np.arange(env.num_junctions), env.correct]

    def entropy(self) -> np.ndarray:
        p = self.probs()
        with np.errstate(divide="ignore", invalid="ignore"):
            return -np.sum(np.where(p > 0, p * np.log(p), 0.0), axis=1)


@dataclass(frozen=True, eq=False)
class Rollout:
    trajectory: Trajectory
    states: np.ndarray  # state ids for s_0..s_T
    choices: np.ndarray  # one choice per junction


def _sample_choices(probs: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    cdf = np.cumsum(probs, axis=1)
    u = rng.random(probs.shape[0])
    return np.minimum((cdf <= u[:, None]).sum(axis=1), probs.shape[1] - 1)


def _seed_rng(seed: int | np.random.SeedSequence | np.random.Generator) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


def build_rollout(env: JunctionEnv, probs: np.ndarray, choices: np.ndarray) -> Rollout:
    steps = env.junction_steps
    tokens = env.corridor_tokens()
    tokens[steps] = choices
    gen_probs = np.ones(env.T)
    gen_probs[steps] = probs[np.arange(env.num_junctions), choices]
    wrong = choices != np.asarray(env.correct)
    # flag at state u: some junction emitted before u was wrong
    wrong_by_step = np.zeros(env.T, dtype=np.int64)
    wrong_by_step[steps] = wrong
    flags = np.concatenate([[0], np.minimum(np.cumsum(wrong_by_step), 1)])
    reward = 0.0 if wrong.any() else 1.0
    traj = Trajectory(tokens, gen_probs, reward)
    states = state_id(np.arange(env.T + 1), flags)
    states.flags.writeable = False
    return Rollout(traj, states, choices)


def rollout(
    env: JunctionEnv,
    policy: Policy,
    seed: int | np.random.SeedSequence | np.random.Generator,
) -> Rollout:
    """Sample one episode; fully determined by ``seed``."""
    probs = policy.probs()
    if probs.shape != (env.num_junctions, env.choices):
        raise ValidationError("policy shape does not match the environment")
    choices = _sample_choices(probs, _seed_rng(seed))
    return build_rollout(env, probs, choices)


def exact_values(env: JunctionEnv, policy: Policy) -> np.ndarray:
    """``V*`` as a ``(T + 1, 2)`` table indexed by ``(u, flag)``.

    With no mistake so far the value is the product of the correct-choice
    probabilities of the junctions still ahead; after a mistake it is 0.
    """
    q = policy.correct_probs(env)
    steps = env.junction_steps
    table = np.zeros((env.T + 1, 2))
    for u in range(env.T + 1):
        table[u, 0] = np.prod(q[steps >= u])
    return table


def exact_value_of(env: JunctionEnv, policy: Policy, states: np.ndarray) -> np.ndarray:
    table = exact_values(env, policy).reshape(-1)
    return table[np.asarray(states)]


def mc_value(
    env: JunctionEnv,
    policy: Policy,
    state: int | tuple[int, int],
    n_rollouts: int,
    seed: int | np.random.SeedSequence | np.random.Generator,
) -> tuple[float, float]:
    """Mean terminal reward of ``n_rollouts`` continuations from ``state``, and its standard error."""
    if n_rollouts < 1:
        raise ValidationError("n_rollouts must be >= 1")
    u, flag = decode_state(state) if not isinstance(state, tuple) else state
    if not 0 <= u <= env.T or flag not in (0, 1):
        raise ValidationError(f"invalid state {state!r}")
    if flag:
        return 0.0, 0.0
    ahead = env.remaining_junctions(u)
    if ahead.size == 0:
        return 1.0, 0.0
    rng = _seed_rng(seed)
    cdf = np.cumsum(policy.probs()[ahead], axis=1)
    draws = rng.random((n_rollouts, ahead.size))
    choices = np.minimum((cdf[None, :, :] <= draws[:, :, None]).sum(axis=2), env.choices - 1)
    rewards = np.all(choices == np.asarray(env.correct)[ahead], axis=1).astype(np.float64)
    mean = float(rewards.mean())
    se = float(rewards.std(ddof=1) / np.sqrt(n_rollouts)) if n_rollouts > 1 else 0.0
    return mean, se
