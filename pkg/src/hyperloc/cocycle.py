"""Energy cocycles, scaled matrix products, holonomies, and past reduction.

The one-step matrix at energy E over a point with potential value v is
``[[E - v, -1], [1, 0]]``; n-step products are accumulated with a per-step
renormalization to unit operator norm, so the log norm lives in a separate
scalar and products of length 10^5 and more stay inside float range.

Stable and unstable holonomies are computed in increment form: the n-th
correction to the identity is an exactly representable rank-one update
scaled by the product norms, which avoids the catastrophic cancellation of
the naive inverse-times-product formula.  For a locally constant function of
radius r the increments vanish identically from step r on, so the holonomy
stabilizes bit-for-bit at depth r.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .errors import NotConvergedError
from .sampling import HoelderFn, LocallyConstantFn, potential
from .symbolic import (
    SftSpec,
    SymbolWindow,
    admissible_words,
    count_admissible_words,
    shift,
    wedge,
)

__all__ = [
    "ScaledMatrix",
    "EnergyInterval",
    "op_norm_2x2",
    "schrodinger_step",
    "transfer_log_norm",
    "cocycle_product",
    "g_n",
    "default_energy_interval",
    "gamma_sup",
    "fiber_bunching_certificate",
    "HolonomyResult",
    "stable_holonomy",
    "unstable_holonomy",
    "reference_window",
    "default_references",
    "ReducedCocycle",
    "reduced_product",
    "h_n_reduction",
]

_WORD_CAP = 10**7


def op_norm_2x2(m) -> float:
    """Largest singular value of a real 2x2 matrix, in closed form.

    Rotation-split form: sigma_{1,2} = hypot((a+d)/2, (c-b)/2) +-
    hypot((a-d)/2, (c+b)/2).  The Gram-matrix form sqrt((f2 +
    sqrt(f2^2 - 4 det^2))/2) loses half its digits when the singular
    values nearly coincide; this one is a sum of nonnegative terms.
    """
    a, b, c, d = float(m[0][0]), float(m[0][1]), float(m[1][0]), float(m[1][1])
    return math.hypot(0.5 * (a + d), 0.5 * (c - b)) + math.hypot(
        0.5 * (a - d), 0.5 * (c + b)
    )


@dataclass(frozen=True, eq=False)
class ScaledMatrix:
    """A 2x2 matrix e^{log_scale} * unit with ``unit`` of operator norm 1."""

    unit: np.ndarray
    log_scale: float

    def __post_init__(self):
        u = np.asarray(self.unit, dtype=float)
        if u.shape != (2, 2):
            raise ValueError("unit must be a 2x2 matrix")
        norm = op_norm_2x2(u)
        if abs(norm - 1.0) > 1e-12:
            raise ValueError(f"unit operator norm must be 1, got {norm!r}")
        u = u.copy()
        u.setflags(write=False)
        object.__setattr__(self, "unit", u)

    @staticmethod
    def identity() -> "ScaledMatrix":
        return ScaledMatrix(np.eye(2), 0.0)

    @staticmethod
    def from_matrix(m) -> "ScaledMatrix":
        m = np.asarray(m, dtype=float)
        s = op_norm_2x2(m)
        if s == 0.0 or not math.isfinite(s):
            raise ValueError(f"cannot scale a matrix of operator norm {s!r}")
        return ScaledMatrix(m / s, math.log(s))

    @property
    def log_norm(self) -> float:
        """log of the operator norm of the represented matrix."""
        return self.log_scale

    def norm(self) -> float:
        return math.exp(self.log_scale)

    def matrix(self) -> np.ndarray:
        """The represented matrix as plain floats; may overflow for large scale."""
        return math.exp(self.log_scale) * self.unit

    def log_det(self) -> tuple[float, float]:
        """(sign, log |det|) of the represented matrix."""
        d = float(np.linalg.det(self.unit))
        if d == 0.0:
            return 0.0, -math.inf
        return math.copysign(1.0, d), math.log(abs(d)) + 2.0 * self.log_scale

    def __matmul__(self, other: "ScaledMatrix") -> "ScaledMatrix":
        prod = self.unit @ other.unit
        s = op_norm_2x2(prod)
        if s == 0.0:
            raise ValueError("product of scaled matrices underflowed to zero")
        return ScaledMatrix(prod / s, self.log_scale + other.log_scale + math.log(s))

    def inverse(self) -> "ScaledMatrix":
        """Inverse via the adjugate; exact for unimodular represented matrices."""
        u = self.unit
        adj = np.array([[u[1, 1], -u[0, 1]], [-u[1, 0], u[0, 0]]])
        d = float(np.linalg.det(u))
        if d == 0.0:
            raise ValueError("matrix is singular to working precision")
        # M^{-1} = adj(M)/det(M); the adjugate of a 2x2 has the same singular
        # values as the original, so adj(unit) already has norm 1.
        return ScaledMatrix(adj * math.copysign(1.0, d), -self.log_scale - math.log(abs(d)))


def schrodinger_step(E: float, v: float) -> np.ndarray:
    """One-step transfer matrix [[E - v, -1], [1, 0]]."""
    return np.array([[E - v, -1.0], [1.0, 0.0]])


def transfer_log_norm(values, E: float) -> tuple[float, tuple[float, float, float, float]]:
    """Scaled product of transfer matrices over a potential sequence.

    Returns (sigma, unit) for A(v_{n-1}) ... A(v_1) A(v_0) with sigma the log
    operator norm and unit = (a, b, c, d) row-major of norm 1.  Empty input
    gives the identity.
    """
    a, b, c, d = 1.0, 0.0, 0.0, 1.0
    sigma = 0.0
    e = float(E)
    vs = values.tolist() if isinstance(values, np.ndarray) else values
    for v in vs:
        x = e - v
        a, b, c, d = x * a - c, x * b - d, a, b
        s = math.hypot(0.5 * (a + d), 0.5 * (c - b)) + math.hypot(
            0.5 * (a - d), 0.5 * (c + b)
        )
        inv = 1.0 / s
        a *= inv
        b *= inv
        c *= inv
        d *= inv
        sigma += math.log(s)
    return sigma, (a, b, c, d)


def _scaled_from_kernel(sigma: float, unit4) -> ScaledMatrix:
    a, b, c, d = unit4
    return ScaledMatrix(np.array([[a, b], [c, d]]), sigma)


def cocycle_product(f, omega: SymbolWindow, E: float, n: int) -> ScaledMatrix:
    """n-step cocycle product at the point represented by ``omega``.

    n >= 1 multiplies the one-step matrices along the forward orbit, n = 0 is
    the identity, and n <= -1 is the inverse of the forward product at the
    shifted point, so the cocycle law holds for all integer pairs.
    """
    if n == 0:
        return ScaledMatrix.identity()
    if n > 0:
        vs = potential(f, omega, n)
        return _scaled_from_kernel(*transfer_log_norm(vs, E))
    back = cocycle_product(f, shift(omega, n), E, -n)
    return back.inverse()


def g_n(f, omega: SymbolWindow, E: float, n: int) -> float:
    """Finite-scale exponent (1/n) log ||A_n||."""
    if n == 0:
        raise ValueError("g_n is undefined at n = 0")
    return cocycle_product(f, omega, E, n).log_scale / abs(n)


@dataclass(frozen=True)
class EnergyInterval:
    lo: float
    hi: float

    def __post_init__(self):
        if not self.lo <= self.hi:
            raise ValueError(f"empty energy interval [{self.lo}, {self.hi}]")

    def grid(self, points: int) -> np.ndarray:
        if points < 2:
            raise ValueError("an energy grid needs at least 2 points")
        return np.linspace(self.lo, self.hi, points)


def _value_range(f) -> tuple[float, float]:
    if isinstance(f, LocallyConstantFn):
        return f.value_range()
    if isinstance(f, HoelderFn):
        return f.value_range_bound()
    raise TypeError(f"unsupported sampling function {type(f).__name__}")


def default_energy_interval(f) -> EnergyInterval:
    """[-2 - ||f|| - 1, 2 + ||f|| + 1]: covers the spectrum with unit margin."""
    lo, hi = _value_range(f)
    bound = max(abs(lo), abs(hi))
    return EnergyInterval(-2.0 - bound - 1.0, 2.0 + bound + 1.0)


def gamma_sup(f, interval: EnergyInterval | None = None) -> float:
    """Supremum of the one-step matrix norm over the energy interval.

    The norm of [[x, -1], [1, 0]] is increasing in |x|, so the supremum is
    attained at an interval endpoint against the extreme value of f.
    """
    if interval is None:
        interval = default_energy_interval(f)
    f_lo, f_hi = _value_range(f)
    x = max(interval.hi - f_lo, f_hi - interval.lo, 0.0)
    return op_norm_2x2(schrodinger_step(x, 0.0))


def fiber_bunching_certificate(
    f,
    alpha: float,
    interval: EnergyInterval | None = None,
    n_max: int = 12,
    energy_points: int = 33,
) -> tuple[int, float]:
    """Least N with max over admissible words of ||A_N||^2 < e^{alpha N}.

    The sup over points is an exact max over admissible words of length
    N + 2 radius (f must be locally constant); the sup over energies is
    evaluated on a grid including the endpoints.  Returns (N, margin) with
    margin = e^{alpha N} - max ||A_N||^2, or raises NotConvergedError if no
    N up to n_max certifies.
    """
    if not isinstance(f, LocallyConstantFn):
        raise TypeError("the bunching certificate requires a locally constant function")
    if alpha <= 0:
        raise ValueError("alpha must be positive")
    if interval is None:
        interval = default_energy_interval(f)
    energies = interval.grid(energy_points)
    r = f.radius
    best = math.inf
    for n in range(1, n_max + 1):
        width = n + 2 * r
        if count_admissible_words(f.spec, width) > _WORD_CAP:
            raise ValueError(
                f"word enumeration at N = {n} exceeds the cap of {_WORD_CAP}"
            )
        worst = -math.inf
        for word in admissible_words(f.spec, width):
            w = SymbolWindow(-r, word)
            vs = potential(f, w, n)
            for e in energies:
                sigma, _ = transfer_log_norm(vs, float(e))
                worst = max(worst, 2.0 * sigma)
        if worst < alpha * n:
            return n, math.exp(alpha * n) - math.exp(worst)
        best = min(best, worst - alpha * n)
    raise NotConvergedError(
        f"no N <= {n_max} certifies fiber bunching (best excess {best:.3g} in log scale)",
        achieved=best,
    )


# ---------------------------------------------------------------------------
# Holonomies


@dataclass(frozen=True)
class HolonomyResult:
    """A holonomy matrix with the achieved increment tolerance and depth."""

    matrix: np.ndarray
    achieved: float
    depth: int


def _value_at(f, window: SymbolWindow) -> float:
    if isinstance(f, LocallyConstantFn):
        return f.evaluate(window)
    value, _ = f.evaluate(window)
    return value


def _check_agreement(w1: SymbolWindow, w2: SymbolWindow, side: str) -> None:
    if side == "future":
        lo, hi = 0, min(w1.end, w2.end)
    else:
        lo, hi = max(w1.start, w2.start), 0
    if hi < 0 or lo > 0:
        raise ValueError("windows must both cover coordinate 0")
    if w1.segment(lo, hi) != w2.segment(lo, hi):
        raise ValueError(f"windows must agree on their common {side} coordinates")


def _holonomy(
    f,
    omega: SymbolWindow,
    omega_prime: SymbolWindow,
    E: float,
    tol: float,
    n_cap: int,
    unstable: bool,
) -> HolonomyResult:
    """Shared increment iteration for stable (forward) and unstable (backward).

    Stable: h_{n+1} - h_n = (v_n - v'_n) e^{sB + sC} adj(uC) E21 uB with B, C
    the forward products along omega and omega_prime.  Unstable: mirrored
    with E12 and backward products.  Increments vanish identically once the
    orbit evaluations coincide, which for radius-r functions happens from
    step r on.
    """
    _check_agreement(omega, omega_prime, "past" if unstable else "future")
    h = np.eye(2)
    prod = ScaledMatrix.identity()  # along omega
    prod_p = ScaledMatrix.identity()  # along omega_prime
    radius = f.radius
    achieved = math.inf
    last_increments: list[float] = []
    for n in range(n_cap):
        if n >= radius:
            # All later evaluations read coordinates on the agreement side.
            return HolonomyResult(h, 0.0, n)
        k = -(n + 1) if unstable else n
        v = _value_at(f, shift(omega, k))
        vp = _value_at(f, shift(omega_prime, k))
        if v != vp:
            dv = v - vp
            scale = prod.log_scale + prod_p.log_scale
            u = prod.unit
            up = prod_p.unit
            if unstable:
                # increment = dv * P'_n E12 P_n^{-1}; with unimodular products
                # P_n^{-1} = adj(P_n) so the unit-level factor is
                # up @ E12 @ adj(u).
                core = np.array(
                    [
                        [-up[0, 0] * u[1, 0], up[0, 0] * u[0, 0]],
                        [-up[1, 0] * u[1, 0], up[1, 0] * u[0, 0]],
                    ]
                )
            else:
                # increment = dv * C_n^{-1} E21 B_n = dv * adj(uC) E21 uB
                # up to the scalar e^{sB+sC} (unimodular one-step factors).
                core = np.array(
                    [
                        [-up[0, 1] * u[0, 0], -up[0, 1] * u[0, 1]],
                        [up[0, 0] * u[0, 0], up[0, 0] * u[0, 1]],
                    ]
                )
            log_mag = math.log(abs(dv)) + scale
            if log_mag > 700.0:
                raise NotConvergedError(
                    f"holonomy increment overflow at step {n} (log magnitude {log_mag:.1f})",
                    achieved=achieved,
                )
            inc = math.copysign(math.exp(log_mag), dv) * core
            inc_norm = op_norm_2x2(inc)
            h = h + inc
            achieved = inc_norm
            last_increments.append(inc_norm)
            if inc_norm < tol:
                return HolonomyResult(h, inc_norm, n + 1)
        else:
            achieved = 0.0
            last_increments.append(0.0)
        step = ScaledMatrix.from_matrix(schrodinger_step(E, v))
        step_p = ScaledMatrix.from_matrix(schrodinger_step(E, vp))
        if unstable:
            # backward products P_n = A(T^{-1}.) ... A(T^{-n}.) grow rightwards
            prod = prod @ step
            prod_p = prod_p @ step_p
        else:
            prod = step @ prod
            prod_p = step_p @ prod_p
    if achieved <= tol:
        return HolonomyResult(h, achieved, n_cap)
    tail = last_increments[-5:]
    if len(tail) >= 2 and all(b <= a for a, b in zip(tail, tail[1:])):
        return HolonomyResult(h, achieved, n_cap)
    raise NotConvergedError(
        f"holonomy increments not below {tol:.1e} within {n_cap} steps "
        f"(achieved {achieved:.3e}, not decreasing)",
        achieved=achieved,
    )


def stable_holonomy(
    f,
    omega: SymbolWindow,
    omega_prime: SymbolWindow,
    E: float,
    tol: float = 1e-10,
    n_cap: int = 1000,
) -> HolonomyResult:
    """lim A_n(omega')^{-1} A_n(omega) over a pair in the same local stable set.

    The windows must agree on their common coordinates n >= 0.  For a
    radius-r function the limit is reached exactly at depth r.
    """
    return _holonomy(f, omega, omega_prime, E, tol, n_cap, unstable=False)


def unstable_holonomy(
    f,
    omega: SymbolWindow,
    omega_prime: SymbolWindow,
    E: float,
    tol: float = 1e-10,
    n_cap: int = 1000,
) -> HolonomyResult:
    """lim A_{-n}(omega')^{-1} A_{-n}(omega) over a pair in the same local unstable set.

    The windows must agree on their common coordinates n <= 0.
    """
    return _holonomy(f, omega, omega_prime, E, tol, n_cap, unstable=True)


# ---------------------------------------------------------------------------
# Reduction to a past-dependent cocycle


def reference_window(spec: SftSpec, j: int, halfwidth: int) -> SymbolWindow:
    """Reference point of the cylinder [0; j]: lexicographically minimal extension.

    Extends symbol j at coordinate 0 by the smallest admissible successor to
    the right and the smallest admissible predecessor to the left, out to
    [-halfwidth, halfwidth].
    """
    if not 1 <= j <= spec.alphabet_size:
        raise ValueError(f"symbol {j} outside alphabet")
    if halfwidth < 0:
        raise ValueError("halfwidth must be nonnegative")
    forward = [j]
    for _ in range(halfwidth):
        forward.append(spec.successors(forward[-1])[0])
    backward = [j]
    for _ in range(halfwidth):
        backward.append(spec.predecessors(backward[-1])[0])
    symbols = tuple(reversed(backward[1:])) + tuple(forward)
    return SymbolWindow(-halfwidth, symbols)


def default_references(spec: SftSpec, halfwidth: int) -> dict[int, SymbolWindow]:
    return {j: reference_window(spec, j, halfwidth) for j in range(1, spec.alphabet_size + 1)}


class ReducedCocycle:
    """Conjugation of the energy cocycle to a past-dependent one.

    The cocycle is conjugated by the unstable holonomies onto the reference
    points phi(omega), where phi splices the past of omega onto the reference
    future of its symbol at 0.  The evaluator returns the conjugated step
    into coordinate 0,

        M(omega) = H^u_{omega, phi(omega)} A(T^{-1} omega)
                   H^u_{phi(T^{-1} omega), T^{-1} omega},

    which maps the trivialized fiber at T^{-1} omega to the one at omega and
    whose value depends only on coordinates n <= 0 (up to the holonomy
    tolerance).  The n-step product from omega is M(T^n omega) ... M(T omega).

    A window must cover [-(2 radius + 1), radius].
    """

    def __init__(
        self,
        f,
        E: float,
        references: dict[int, SymbolWindow] | None = None,
        tol: float = 1e-10,
        n_cap: int = 1000,
    ):
        self.f = f
        self.E = float(E)
        self.tol = tol
        self.n_cap = n_cap
        if references is None:
            references = default_references(f.spec, max(2 * f.radius + 2, 2))
        for j, ref in references.items():
            if ref[0] != j:
                raise ValueError(f"reference window for symbol {j} must carry {j} at 0")
        self.references = dict(references)

    @property
    def radius(self) -> int:
        return self.f.radius

    def required_range(self) -> tuple[int, int]:
        r = self.f.radius
        return (-(2 * r + 1), r)

    def _phi(self, window: SymbolWindow) -> SymbolWindow:
        ref = self.references[window[0]]
        return wedge(window, ref)

    def matrix(self, window: SymbolWindow) -> np.ndarray:
        lo, hi = self.required_range()
        if not window.covers(lo, hi):
            raise ValueError(
                f"window [{window.start}, {window.end}] does not cover [{lo}, {hi}] "
                "required by the reduced cocycle"
            )
        prev = shift(window, -1)
        left = unstable_holonomy(
            self.f, window, self._phi(window), self.E, self.tol, self.n_cap
        )
        right = unstable_holonomy(
            self.f, self._phi(prev), prev, self.E, self.tol, self.n_cap
        )
        v = _value_at(self.f, prev)
        return left.matrix @ schrodinger_step(self.E, v) @ right.matrix


def reduced_product(evaluator: ReducedCocycle, omega: SymbolWindow, n: int) -> ScaledMatrix:
    """n-step product of the reduced cocycle from omega (n >= 0)."""
    if n < 0:
        raise ValueError("reduced products are implemented for n >= 0")
    out = ScaledMatrix.identity()
    for k in range(1, n + 1):
        out = ScaledMatrix.from_matrix(evaluator.matrix(shift(omega, k))) @ out
    return out


def h_n_reduction(
    f,
    omega: SymbolWindow,
    E: float,
    n: int,
    K: int,
    references: dict[int, SymbolWindow] | None = None,
    interval: EnergyInterval | None = None,
) -> tuple[float, float]:
    """Partial sum h_n(omega) = sum_{k=0}^{K} [g_n(T^k omega) - g_n(T^k phi(omega))].

    phi splices the reference past onto the future of omega, so g_n composed
    with T^k sees two points at distance e^{-k} and the terms decay
    geometrically.  Returns (partial sum, tail bound); the tail bound is 0
    for a radius-r locally constant f once K >= r - 1, and otherwise uses the
    certified Hoelder constant against the one-step norm bound.
    """
    if n < 1:
        raise ValueError("n must be at least 1")
    if K < 0:
        raise ValueError("K must be nonnegative")
    if references is None:
        references = default_references(f.spec, max(2 * f.radius + 2, 2))
    ref = references[omega[0]]
    phi = wedge(ref, omega)
    r = f.radius
    total = 0.0
    # For a radius-r function the two orbits read identical coordinates from
    # step r on, so only the first min(K + 1, r) terms can be nonzero.
    top = min(K, r - 1) if isinstance(f, LocallyConstantFn) else K
    for k in range(top + 1):
        total += g_n(f, shift(omega, k), E, n) - g_n(f, shift(phi, k), E, n)
    if isinstance(f, LocallyConstantFn):
        if K >= r - 1:
            return total, 0.0
        # Remaining exact terms were not requested; bound each by the largest
        # possible difference of log norms over n-step products.
        gamma = gamma_sup(f, interval)
        return total, (r - 1 - K) * 2.0 * math.log(gamma)
    gamma = gamma_sup(f, interval)
    halpha = f.hoelder_constant()
    tail = (
        gamma ** (n - 1)
        * halpha
        * math.exp(-f.alpha * (K + 1))
        / (1.0 - math.exp(-f.alpha))
    )
    return total, tail
