"""Shift-invariant Markov measures on subshifts of finite type.

A measure is given by a row-stochastic matrix P whose support pattern equals
the transition matrix of the subshift, together with its stationary vector.
Bernoulli measures are the special case of equal rows on a full shift.
Cylinder masses, window sampling, the bounded-distortion constant and the
local product density are all computed from (P, pi) directly.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .seeding import rng_from_seed
from .symbolic import SftSpec, SymbolWindow, is_admissible

__all__ = [
    "ShiftMeasure",
    "CylinderMass",
    "stationary_distribution",
    "cylinder_mass",
    "sample_window",
    "sample_unstable_fiber",
    "distortion_constant",
    "local_product_density",
]

_ROW_SUM_TOL = 1e-12
_STATIONARY_TOL = 1e-10


def _is_irreducible(support: np.ndarray) -> bool:
    """Strong connectivity of the directed support graph via boolean closure."""
    n = support.shape[0]
    reach = support.astype(bool) | np.eye(n, dtype=bool)
    for _ in range(n):
        reach = reach | (reach @ reach)
    return bool(reach.all())


def stationary_distribution(P, tol: float = _STATIONARY_TOL) -> np.ndarray:
    """Stationary probability vector of a row-stochastic matrix.

    Raises ValueError if the support is reducible, and NumericalError-style
    ValueError if the solved vector fails ``max |pi P - pi| <= tol``.
    """
    P = np.asarray(P, dtype=float)
    n = P.shape[0]
    if P.shape != (n, n):
        raise ValueError("transition probability matrix must be square")
    if not _is_irreducible(P > 0):
        raise ValueError("transition probabilities have reducible support")
    # pi solves pi (P - I) = 0 with sum(pi) = 1; solve the stacked system.
    a = np.vstack([P.T - np.eye(n), np.ones((1, n))])
    b = np.zeros(n + 1)
    b[-1] = 1.0
    pi, *_ = np.linalg.lstsq(a, b, rcond=None)
    residual = float(np.max(np.abs(pi @ P - pi)))
    if residual > tol:
        raise ValueError(
            f"stationary vector did not converge: residual {residual:.3e} > {tol:.1e}"
        )
    if (pi <= 0).any():
        raise ValueError("stationary vector has a nonpositive entry")
    return pi


@dataclass(frozen=True)
class ShiftMeasure:
    """Markov measure: subshift, row-stochastic matrix, stationary vector."""

    spec: SftSpec
    transition_probs: tuple[tuple[float, ...], ...]
    stationary: tuple[float, ...]

    def __post_init__(self):
        ell = self.spec.alphabet_size
        P = np.asarray(self.transition_probs, dtype=float)
        pi = np.asarray(self.stationary, dtype=float)
        if P.shape != (ell, ell) or pi.shape != (ell,):
            raise ValueError("measure dimensions must match the alphabet size")
        if np.max(np.abs(P.sum(axis=1) - 1.0)) > _ROW_SUM_TOL:
            raise ValueError("transition probabilities must be row-stochastic")
        support = (P > 0).astype(int)
        if not np.array_equal(support, self.spec.matrix):
            raise ValueError(
                "support of transition probabilities must equal the subshift transitions"
            )
        if (pi <= 0).any():
            raise ValueError("stationary vector must be strictly positive")
        if np.max(np.abs(pi @ P - pi)) > _STATIONARY_TOL:
            raise ValueError("stationary vector does not satisfy pi P = pi")

    @staticmethod
    def bernoulli(probs) -> "ShiftMeasure":
        """I.i.d. symbols on the full shift; the stationary vector is probs itself."""
        p = tuple(float(x) for x in probs)
        if abs(sum(p) - 1.0) > _ROW_SUM_TOL or any(x <= 0 for x in p):
            raise ValueError("bernoulli probabilities must be positive and sum to 1")
        spec = SftSpec.full_shift(len(p))
        return ShiftMeasure(spec, (p,) * len(p), p)

    @staticmethod
    def markov(P, spec: SftSpec | None = None) -> "ShiftMeasure":
        """Markov measure with computed stationary vector.

        The subshift defaults to the support pattern of P.
        """
        P = np.asarray(P, dtype=float)
        if spec is None:
            spec = SftSpec.from_matrix((P > 0).astype(int))
        pi = stationary_distribution(P)
        return ShiftMeasure(
            spec,
            tuple(tuple(float(x) for x in row) for row in P),
            tuple(float(x) for x in pi),
        )

    @cached_property
    def P(self) -> np.ndarray:
        arr = np.asarray(self.transition_probs, dtype=float)
        arr.setflags(write=False)
        return arr

    @cached_property
    def pi(self) -> np.ndarray:
        arr = np.asarray(self.stationary, dtype=float)
        arr.setflags(write=False)
        return arr


@dataclass(frozen=True)
class CylinderMass:
    """A cylinder set [position; word] together with its measure."""

    word: tuple[int, ...]
    position: int
    mass: float


def cylinder_mass(m: ShiftMeasure, word, position: int = 0) -> float:
    """Measure of the cylinder fixing ``word`` starting at ``position``.

    Equals pi[j0] * prod P[j_i, j_{i+1}]; inadmissible words get mass 0, and
    the value does not depend on ``position`` (shift invariance).
    """
    word = tuple(word)
    if not word:
        raise ValueError("cylinder word must be nonempty")
    if not is_admissible(m.spec, word):
        return 0.0
    mass = m.stationary[word[0] - 1]
    for a, b in zip(word, word[1:]):
        mass *= m.transition_probs[a - 1][b - 1]
    return mass


def sample_window(m: ShiftMeasure, a: int, b: int, seed: int) -> SymbolWindow:
    """Sample a window on [a, b]: symbol at a from pi, successors from P rows."""
    if b < a:
        raise ValueError(f"empty coordinate range [{a}, {b}]")
    rng = rng_from_seed(seed)
    ell = m.spec.alphabet_size
    symbols = [int(rng.choice(ell, p=m.pi)) + 1]
    for _ in range(b - a):
        row = m.P[symbols[-1] - 1]
        symbols.append(int(rng.choice(ell, p=row)) + 1)
    return SymbolWindow(a, tuple(symbols))


def sample_unstable_fiber(
    m: ShiftMeasure, past: SymbolWindow, future_len: int, seed: int
) -> SymbolWindow:
    """Extend a past window (ending at coordinate 0) with sampled future symbols.

    This samples the conditional measure on the local unstable set of the
    past: the continuation is a Markov chain started from the symbol at 0.
    """
    if past.end != 0:
        raise ValueError("past window must end at coordinate 0")
    if not is_admissible(m.spec, past):
        raise ValueError("past window is not admissible for this subshift")
    if future_len < 0:
        raise ValueError("future_len must be nonnegative")
    rng = rng_from_seed(seed)
    ell = m.spec.alphabet_size
    symbols = list(past.symbols)
    for _ in range(future_len):
        row = m.P[symbols[-1] - 1]
        symbols.append(int(rng.choice(ell, p=row)) + 1)
    return SymbolWindow(past.start, tuple(symbols))


def distortion_constant(m: ShiftMeasure, gap_cap: int = 10) -> float:
    """Bounded-distortion constant over cylinder pairs separated by a gap.

    For a Markov measure the mass ratio of a joint cylinder to the product of
    its factors equals (P^g)[j, i] / pi[i], with j the last symbol of the
    first word, i the first symbol of the second, and g >= 1 the gap.  The
    constant is the max of ratio and 1/ratio over gaps up to ``gap_cap``.
    """
    if gap_cap < 1:
        raise ValueError("gap_cap must be at least 1")
    worst = 1.0
    power = m.P.copy()
    for _ in range(gap_cap):
        for j in range(m.spec.alphabet_size):
            for i in range(m.spec.alphabet_size):
                if power[j, i] <= 0.0:
                    continue
                ratio = power[j, i] / m.stationary[i]
                worst = max(worst, ratio, 1.0 / ratio)
        power = power @ m.P
    return worst


def local_product_density(m: ShiftMeasure, j: int) -> float:
    """Density of the measure against the past x future product at symbol j.

    On the set of points with symbol j at coordinate 0 the measure
    disintegrates as 1/pi[j] times the product of its past and future
    marginals; the density is constant for a Markov measure.
    """
    if not 1 <= j <= m.spec.alphabet_size:
        raise ValueError(f"symbol {j} outside alphabet")
    return 1.0 / m.stationary[j - 1]
