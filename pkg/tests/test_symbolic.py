"""Windows, the wedge splice, the e^{-N} metric, and transition-matrix facts."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hyperloc.symbolic import (
    INDETERMINATE,
    NOT_MIXING,
    SftSpec,
    SymbolWindow,
    admissible_words,
    count_admissible_words,
    fixed_points,
    is_admissible,
    metric_distance,
    mixing_constant,
    shift,
    wedge,
)

FULL2 = SftSpec.full_shift(2)
GOLDEN = SftSpec.golden_mean()
FLIP = SftSpec(2, ((0, 1), (1, 0)))


def test_window_coordinates():
    w = SymbolWindow(-2, (1, 2, 1, 1, 2))
    assert w.start == -2 and w.end == 2 and len(w) == 5
    assert w[-2] == 1 and w[0] == 1 and w[2] == 2
    assert w.segment(-1, 1) == (2, 1, 1)
    with pytest.raises(IndexError):
        w[3]


def test_window_validation():
    with pytest.raises(ValueError):
        SymbolWindow(0, ())
    with pytest.raises(ValueError):
        SymbolWindow(0, (0, 1))


def test_shift_moves_frame_only():
    w = SymbolWindow(-1, (2, 1, 2))
    t = shift(w, 1)
    assert t.symbols == w.symbols
    assert t.start == -2
    for n in range(t.start, t.end + 1):
        assert t[n] == w[n + 1]
    assert shift(shift(w, 3), -3) == w


def test_wedge_splices_past_and_future():
    w1 = SymbolWindow(-2, (1, 1, 2, 2, 2))
    w2 = SymbolWindow(-2, (2, 2, 2, 1, 1))
    glued = wedge(w1, w2)
    assert glued.segment(w1.start, 0) == w1.segment(w1.start, 0)
    assert glued.segment(0, w2.end) == w2.segment(0, w2.end)
    assert wedge(w1, w1) == w1


def test_wedge_requires_matching_symbol_at_zero():
    w1 = SymbolWindow(-1, (1, 1, 1))
    w2 = SymbolWindow(-1, (2, 2, 2))
    with pytest.raises(ValueError):
        wedge(w1, w2)


def test_metric_examples():
    w1 = SymbolWindow(-3, (1, 1, 1, 1, 1, 1, 1))
    w2 = SymbolWindow(-3, (1, 1, 1, 1, 1, 2, 1))
    # first disagreement at coordinate 2, symmetric agreement radius 2
    assert metric_distance(w1, w2) == pytest.approx(math.exp(-2))
    assert metric_distance(w1, w1) is INDETERMINATE


@st.composite
def _window_triples(draw):
    half = draw(st.integers(min_value=1, max_value=5))
    mk = lambda: SymbolWindow(
        -half,
        tuple(draw(st.integers(1, 2)) for _ in range(2 * half + 1)),
    )
    return mk(), mk(), mk()


@given(_window_triples())
@settings(max_examples=200, deadline=None)
def test_metric_is_an_ultrametric(triple):
    x, y, z = triple
    res = 1e-9  # any indeterminate distance is below the window resolution
    d = lambda a, b: (
        res if metric_distance(a, b) is INDETERMINATE else metric_distance(a, b)
    )
    assert d(x, z) <= max(d(x, y), d(y, z)) + 1e-15
    assert d(x, y) == d(y, x)


def test_admissible_word_counts():
    assert count_admissible_words(FULL2, 5) == 32
    # golden mean words of length n follow the Fibonacci recursion
    counts = [count_admissible_words(GOLDEN, n) for n in range(1, 8)]
    assert counts == [2, 3, 5, 8, 13, 21, 34]
    assert all(is_admissible(GOLDEN, w) for w in admissible_words(GOLDEN, 6))
    assert not is_admissible(GOLDEN, (2, 2))


def test_mixing_and_fixed_points():
    assert mixing_constant(FULL2) == 1
    assert mixing_constant(GOLDEN) == 2
    assert mixing_constant(FLIP) is NOT_MIXING
    assert fixed_points(FULL2) == (1, 2)
    assert fixed_points(GOLDEN) == (1,)
    assert fixed_points(FLIP) == ()


def test_spec_rejects_dead_symbols():
    with pytest.raises(ValueError):
        SftSpec(2, ((0, 0), (1, 1)))
    with pytest.raises(ValueError):
        SftSpec(1, ((1,),))
