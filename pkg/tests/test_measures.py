"""Markov measures, cylinder masses, and the bounded-distortion constant."""

import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hyperloc.measures import (
    ShiftMeasure,
    cylinder_mass,
    distortion_constant,
    local_product_density,
    sample_unstable_fiber,
    sample_window,
    stationary_distribution,
)
from hyperloc.symbolic import SftSpec, admissible_words

BERN = ShiftMeasure.bernoulli((0.5, 0.5))
SKEW = ShiftMeasure.bernoulli((0.3, 0.7))
GOLDEN_P = [[0.5, 0.5], [1.0, 0.0]]
MARKOV = ShiftMeasure.markov(GOLDEN_P)


def test_stationary_vector():
    pi = stationary_distribution(np.array(GOLDEN_P))
    assert pi == pytest.approx([2 / 3, 1 / 3])
    assert MARKOV.stationary @ MARKOV.P == pytest.approx(MARKOV.stationary)


def test_bernoulli_rejects_bad_probs():
    with pytest.raises(ValueError):
        ShiftMeasure.bernoulli((0.4, 0.7))
    with pytest.raises(ValueError):
        ShiftMeasure.bernoulli((1.0, 0.0))


@given(st.integers(min_value=1, max_value=5))
@settings(max_examples=20, deadline=None)
def test_cylinder_masses_partition_unity(length):
    for m in (SKEW, MARKOV):
        total = sum(
            cylinder_mass(m, w) for w in admissible_words(m.spec, length)
        )
        assert total == pytest.approx(1.0, abs=1e-12)


def test_cylinder_mass_is_position_invariant():
    word = (1, 2, 1)
    assert cylinder_mass(MARKOV, word, position=0) == cylinder_mass(
        MARKOV, word, position=-7
    )
    assert cylinder_mass(MARKOV, (2, 2)) == 0.0


def test_sample_window_deterministic_and_admissible():
    w1 = sample_window(MARKOV, -10, 10, seed=123)
    w2 = sample_window(MARKOV, -10, 10, seed=123)
    assert w1 == w2
    assert w1.start == -10 and w1.end == 10
    for n in range(w1.start, w1.end):
        assert MARKOV.spec.allows(w1[n], w1[n + 1])
    assert sample_window(MARKOV, -10, 10, seed=124) != w1


def test_sample_unstable_fiber_keeps_past():
    past = sample_window(MARKOV, -6, 0, seed=9)
    fib = sample_unstable_fiber(MARKOV, past, future_len=8, seed=10)
    assert fib.segment(-6, 0) == past.segment(-6, 0)
    assert fib.end == 8
    for n in range(-6, 8):
        assert MARKOV.spec.allows(fib[n], fib[n + 1])


def test_distortion_constant_bernoulli_is_one():
    assert distortion_constant(BERN) == 1.0
    assert distortion_constant(SKEW) == 1.0


def test_distortion_constant_markov_golden():
    assert distortion_constant(MARKOV) == pytest.approx(1.5, abs=1e-12)


def _joint_mass(m, w1, gap, w2):
    """Mass of [w1 at 0] intersected with [w2 at len(w1) + gap], by summing fillers."""
    spec = m.spec
    total = 0.0
    for filler in itertools.product(range(1, spec.alphabet_size + 1), repeat=gap):
        whole = w1 + filler + w2
        total += cylinder_mass(m, whole)
    return total


def test_cylinder_pairs_respect_distortion_bounds():
    rng = np.random.default_rng(8)
    C = distortion_constant(MARKOV)
    words = list(admissible_words(MARKOV.spec, 3))
    for _ in range(200):
        w1 = words[rng.integers(len(words))]
        w2 = words[rng.integers(len(words))]
        gap = int(rng.integers(1, 4))
        joint = _joint_mass(MARKOV, w1, gap, w2)
        product = cylinder_mass(MARKOV, w1) * cylinder_mass(MARKOV, w2)
        if product == 0.0:
            assert joint == 0.0
            continue
        ratio = joint / product
        assert 1.0 / C - 1e-12 <= ratio <= C + 1e-12


def test_local_product_density_positive():
    for j in (1, 2):
        assert local_product_density(MARKOV, j) > 0.0
