"""Shared oracles and strategies.

The oracles here are deliberately naive loops written from the definitions,
independent of the vectorized or recursive code paths under test.
"""

import math

import numpy as np
import pytest
from hypothesis import settings, strategies as st

settings.register_profile("default", max_examples=100, deadline=None)
settings.load_profile("default")


def gae_oracle(deltas, lam):
    T = len(deltas)
    return [sum(lam ** l * deltas[t + l] for l in range(T - t)) for t in range(T)]


def suffix_sum_oracle(deltas):
    return [math.fsum(deltas[t:]) for t in range(len(deltas))]


def sae_count_oracle(deltas, boundaries, lam):
    """Weight on delta_{t+l} is lam ** (boundaries among states t+1..t+l)."""
    T = len(deltas)
    bset = set(boundaries)
    out = []
    for t in range(T):
        acc, crossed = 0.0, 0
        for l in range(T - t):
            acc += lam ** crossed * deltas[t + l]
            if t + l + 1 in bset:
                crossed += 1
        out.append(acc)
    return out


def pearson_oracle(xs, ys):
    n = len(xs)
    mx, my = sum(xs) / n, sum(ys) / n
    sxy = sum((x - mx) * (y - my) for x, y in zip(xs, ys))
    sxx = sum((x - mx) ** 2 for x in xs)
    syy = sum((y - my) ** 2 for y in ys)
    return sxy / math.sqrt(sxx * syy)


@st.composite
def value_cases(draw, max_T=64):
    """(tokens, gen_probs, reward, values) with values[T] pinned to reward."""
    T = draw(st.integers(1, max_T))
    finite = st.floats(-5, 5, allow_nan=False, allow_infinity=False)
    probs = st.floats(1e-6, 1.0, allow_nan=False)
    tokens = draw(st.lists(st.integers(0, 20), min_size=T, max_size=T))
    gen = draw(st.lists(probs, min_size=T, max_size=T))
    reward = draw(st.sampled_from([0.0, 1.0]))
    values = draw(st.lists(finite, min_size=T, max_size=T)) + [reward]
    return tokens, gen, reward, values


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
