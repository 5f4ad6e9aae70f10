"""Sampling functions: locally constant, layered Hoelder, and torus observables.

A locally constant function of radius r reads the symbols on [-r, r] and
looks the value up in a full table over admissible words.  A Hoelder
function is a finite layered sum f = f_0 + f_1 + ... + f_K of locally
constant functions whose sup norms decay geometrically at rate alpha;
truncating the sum at depth K' leaves a certified tail bound.  The torus
systems (doubling map and the hyperbolic toral automorphism) provide
potentials along orbits instead of symbol windows.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Callable, Sequence

import numpy as np

from .symbolic import SftSpec, SymbolWindow, admissible_words, count_admissible_words, shift

__all__ = [
    "LocallyConstantFn",
    "HoelderFn",
    "TorusSystem",
    "potential",
    "lambda0",
    "is_globally_fiber_bunched",
    "torus_orbit",
    "torus_orbit_exact",
    "read_table_file",
    "write_table_file",
]

_TABLE_CAP = 10**7


@dataclass(frozen=True)
class LocallyConstantFn:
    """A function of the symbols on [-radius, radius], as a full lookup table.

    The table must contain every admissible word of length 2*radius + 1
    exactly once; evaluation is an exact lookup.
    """

    spec: SftSpec
    radius: int
    table: dict[tuple[int, ...], float]

    def __post_init__(self):
        if self.radius < 0:
            raise ValueError("radius must be nonnegative")
        width = 2 * self.radius + 1
        if count_admissible_words(self.spec, width) > _TABLE_CAP:
            raise ValueError(
                f"table for radius {self.radius} would exceed {_TABLE_CAP} words"
            )
        expected = set(admissible_words(self.spec, width))
        got = set(self.table)
        if got != expected:
            missing = sorted(expected - got)[:3]
            extra = sorted(got - expected)[:3]
            raise ValueError(
                "table keys must be exactly the admissible words of length "
                f"{width}; missing {missing}, unexpected {extra}"
            )

    @staticmethod
    def from_site_values(spec: SftSpec, values: Sequence[float]) -> "LocallyConstantFn":
        """Radius-0 function assigning ``values[j-1]`` to symbol j."""
        if len(values) != spec.alphabet_size:
            raise ValueError("need one value per symbol")
        return LocallyConstantFn(
            spec, 0, {(j,): float(values[j - 1]) for j in range(1, spec.alphabet_size + 1)}
        )

    @staticmethod
    def constant(spec: SftSpec, value: float, radius: int = 0) -> "LocallyConstantFn":
        width = 2 * radius + 1
        return LocallyConstantFn(
            spec, radius, {w: float(value) for w in admissible_words(spec, width)}
        )

    def evaluate(self, window: SymbolWindow) -> float:
        """Exact table lookup of the symbols on [-radius, radius]."""
        r = self.radius
        if not window.covers(-r, r):
            raise ValueError(
                f"window [{window.start}, {window.end}] does not cover the "
                f"required range [{-r}, {r}] for a radius-{r} function"
            )
        return self.table[window.segment(-r, r)]

    def sup_norm(self) -> float:
        return max(abs(v) for v in self.table.values())

    def value_range(self) -> tuple[float, float]:
        vals = self.table.values()
        return min(vals), max(vals)

    def is_constant(self) -> bool:
        vals = set(self.table.values())
        return len(vals) == 1


@dataclass(frozen=True)
class HoelderFn:
    """Layered sum of locally constant functions with geometric sup-norm decay.

    Layer k must have radius k and sup norm at most tail_bound * e^{-alpha k}.
    """

    alpha: float
    layers: tuple[LocallyConstantFn, ...]
    tail_bound: float

    def __post_init__(self):
        if self.alpha <= 0:
            raise ValueError("alpha must be positive")
        if self.tail_bound < 0:
            raise ValueError("tail_bound must be nonnegative")
        if not self.layers:
            raise ValueError("at least one layer is required")
        for k, layer in enumerate(self.layers):
            if layer.radius != k:
                raise ValueError(f"layer {k} must have radius {k}, got {layer.radius}")
            cap = self.tail_bound * math.exp(-self.alpha * k)
            if layer.sup_norm() > cap * (1.0 + 1e-12) + 1e-300:
                raise ValueError(
                    f"layer {k} sup norm {layer.sup_norm():.6g} exceeds its "
                    f"geometric cap {cap:.6g}"
                )

    @property
    def spec(self) -> SftSpec:
        return self.layers[0].spec

    @property
    def radius(self) -> int:
        return len(self.layers) - 1

    def evaluate(self, window: SymbolWindow, depth: int | None = None) -> tuple[float, float]:
        """Truncated layer sum and the tail bound left out by the truncation.

        With ``depth`` None or >= the number of layers the sum is complete
        and the tail bound is exactly 0.
        """
        top = self.radius if depth is None else min(depth, self.radius)
        if top < 0:
            raise ValueError("depth must be nonnegative")
        value = 0.0
        for layer in self.layers[: top + 1]:
            value += layer.evaluate(window)
        if top >= self.radius:
            tail = 0.0
        else:
            tail = self.tail_bound * math.exp(-self.alpha * top) / (1.0 - math.exp(-self.alpha))
        return value, tail

    def sup_norm_bound(self) -> float:
        """Sum of layer sup norms; an upper bound for the sup norm of f."""
        return sum(layer.sup_norm() for layer in self.layers)

    def value_range_bound(self) -> tuple[float, float]:
        """Outer bounds on the range of f from layerwise ranges."""
        lo = sum(layer.value_range()[0] for layer in self.layers)
        hi = sum(layer.value_range()[1] for layer in self.layers)
        return lo, hi

    def hoelder_constant(self) -> float:
        """Certified alpha-Hoelder constant 2 * tail_bound / (1 - e^{-alpha}).

        Windows at distance e^{-N} agree on all layers of radius < N, and
        each remaining layer contributes at most twice its sup norm.
        """
        return 2.0 * self.tail_bound / (1.0 - math.exp(-self.alpha))

    def is_constant(self) -> bool:
        return all(layer.is_constant() for layer in self.layers) and all(
            layer.sup_norm() == 0.0 for layer in self.layers[1:]
        )


def potential(f, omega: SymbolWindow, n: int) -> np.ndarray:
    """Potential values V(k) = f(T^k omega) for k = 0, ..., n - 1.

    The window must cover [-radius, n - 1 + radius].  Hoelder functions are
    evaluated with all layers (zero tail).
    """
    if n < 0:
        raise ValueError("n must be nonnegative")
    r = f.radius
    if n > 0 and not omega.covers(-r, n - 1 + r):
        raise ValueError(
            f"window [{omega.start}, {omega.end}] does not cover "
            f"[{-r}, {n - 1 + r}] needed for {n} potential values at radius {r}"
        )
    out = np.empty(n)
    if isinstance(f, LocallyConstantFn):
        syms = omega.symbols
        base = -omega.start  # index of coordinate 0
        width = 2 * r + 1
        table = f.table
        for k in range(n):
            lo = base + k - r
            out[k] = table[syms[lo : lo + width]]
        return out
    for k in range(n):
        value, _ = f.evaluate(shift(omega, k))
        out[k] = value
    return out


def lambda0(alpha: float, base: str = "natural") -> float:
    """Fiber-bunching sup-norm threshold for the two standard codings.

    ``natural`` uses expansion factor e (subshift metric), ``doubling`` uses
    factor 2 (binary coding of the doubling map).
    """
    if alpha <= 0:
        raise ValueError("alpha must be positive")
    if base == "natural":
        return (math.exp(alpha / 2.0) - 1.0) ** 2 / 9.0
    if base == "doubling":
        return (2.0 ** (alpha / 2.0) - 1.0) ** 2 / 9.0
    raise ValueError(f"unknown base {base!r}; use 'natural' or 'doubling'")


def is_globally_fiber_bunched(
    f, alpha: float | None = None, base: str = "natural"
) -> tuple[bool, float]:
    """Sup-norm test against the bunching threshold; returns (decision, margin).

    The margin is lambda0 - (sup-norm bound of f); positive margins certify
    bunching of the associated energy cocycle on the standard interval.
    """
    if isinstance(f, HoelderFn):
        a = f.alpha if alpha is None else alpha
        bound = f.sup_norm_bound()
    elif isinstance(f, LocallyConstantFn):
        if alpha is None:
            raise ValueError("alpha is required for a locally constant function")
        a = alpha
        bound = f.sup_norm()
    else:
        raise TypeError(f"unsupported sampling function {type(f).__name__}")
    threshold = lambda0(a, base)
    margin = threshold - bound
    return margin > 0.0, margin


# ---------------------------------------------------------------------------
# Torus systems


@dataclass(frozen=True)
class TorusSystem:
    """Doubling map x -> 2x mod 1 or the toral automorphism (x,y) -> (2x+y, x+y).

    The observable maps a point of the torus (a float for the doubling map, a
    pair for the automorphism) to a potential value.
    """

    kind: str
    observable: Callable
    name: str = "custom"

    def __post_init__(self):
        if self.kind not in ("doubling", "cat"):
            raise ValueError(f"kind must be 'doubling' or 'cat', got {self.kind!r}")

    @property
    def dimension(self) -> int:
        return 1 if self.kind == "doubling" else 2


#: Orbit length beyond which 64-bit float iteration of the toral automorphism
#: is dominated by rounding amplification; callers get a warning past this.
CAT_FLOAT_ORBIT_CAP = 1000


def torus_orbit(system: TorusSystem, x0, n: int) -> np.ndarray:
    """Observable along the float orbit of length n started at x0.

    Literal 64-bit iteration: for the doubling map a dyadic-rational start
    collapses to the fixed point 0 after finitely many steps, and for the
    automorphism rounding errors grow exponentially (see
    CAT_FLOAT_ORBIT_CAP).  Use :func:`torus_orbit_exact` for validation and
    the measure-sampling path for statistics.
    """
    if n < 1:
        raise ValueError("orbit length must be at least 1")
    out = np.empty(n)
    if system.kind == "doubling":
        x = float(x0) % 1.0
        for k in range(n):
            out[k] = system.observable(x)
            x = (2.0 * x) % 1.0
    else:
        if n > CAT_FLOAT_ORBIT_CAP:
            import warnings

            warnings.warn(
                f"float orbit of length {n} exceeds the shadowing cap "
                f"{CAT_FLOAT_ORBIT_CAP} for the toral automorphism",
                stacklevel=2,
            )
        x, y = float(x0[0]) % 1.0, float(x0[1]) % 1.0
        for k in range(n):
            out[k] = system.observable((x, y))
            x, y = (2.0 * x + y) % 1.0, (x + y) % 1.0
    return out


def torus_orbit_exact(kind: str, x0, n: int) -> list:
    """Exact rational orbit of length n (points, not observable values)."""
    if n < 1:
        raise ValueError("orbit length must be at least 1")
    if kind == "doubling":
        x = Fraction(x0) % 1
        orbit = []
        for _ in range(n):
            orbit.append(x)
            x = (2 * x) % 1
        return orbit
    if kind == "cat":
        x, y = Fraction(x0[0]) % 1, Fraction(x0[1]) % 1
        orbit = []
        for _ in range(n):
            orbit.append((x, y))
            x, y = (2 * x + y) % 1, (x + y) % 1
        return orbit
    raise ValueError(f"kind must be 'doubling' or 'cat', got {kind!r}")


# ---------------------------------------------------------------------------
# Table file format: one line per admissible word, "j0,j1,...,jk value"


def read_table_file(path, spec: SftSpec, radius: int) -> LocallyConstantFn:
    """Parse a table file; rejected unless every admissible word appears once."""
    table: dict[tuple[int, ...], float] = {}
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            parts = line.split()
            if len(parts) != 2:
                raise ValueError(f"{path}:{lineno}: expected 'word value', got {line!r}")
            try:
                word = tuple(int(s) for s in parts[0].split(","))
                value = float(parts[1])
            except ValueError as exc:
                raise ValueError(f"{path}:{lineno}: {exc}") from None
            if word in table:
                raise ValueError(f"{path}:{lineno}: duplicate word {parts[0]}")
            table[word] = value
    return LocallyConstantFn(spec, radius, table)


def write_table_file(path, f: LocallyConstantFn) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for word in sorted(f.table):
            fh.write(",".join(str(s) for s in word) + " " + repr(f.table[word]) + "\n")
