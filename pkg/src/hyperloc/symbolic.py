"""Two-sided subshifts of finite type and finite symbol windows.

A subshift point is an admissible bi-infinite symbol sequence; everything
here works with finite windows of such sequences, indexed by absolute
coordinates so that the left shift acts by relabeling.  Symbols run from 1
to the alphabet size, matching the usual convention of writing cylinders as
``[a; j_0, ..., j_k]``.

All types are immutable and all operations are pure.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from typing import Iterator

import numpy as np

__all__ = [
    "SftSpec",
    "SymbolWindow",
    "INDETERMINATE",
    "NOT_MIXING",
    "is_admissible",
    "shift",
    "metric_distance",
    "wedge",
    "fixed_points",
    "mixing_constant",
    "admissible_words",
    "count_admissible_words",
]


class _Sentinel:
    __slots__ = ("_name",)

    def __init__(self, name: str):
        self._name = name

    def __repr__(self) -> str:
        return self._name


#: Returned by :func:`metric_distance` when the windows agree on their whole
#: common symmetric range, so the true distance is only known to be smaller
#: than the resolution of the inputs.
INDETERMINATE = _Sentinel("Indeterminate")

#: Returned by :func:`mixing_constant` when no power up to the cap is
#: entrywise positive.
NOT_MIXING = _Sentinel("NotMixing")


@dataclass(frozen=True)
class SftSpec:
    """A subshift of finite type: alphabet size and 0/1 transition matrix.

    ``transition[i][j] == 1`` allows symbol ``i + 1`` to be followed by
    ``j + 1``.  Every row and every column must contain a 1, so no symbol is
    a dead end in either time direction.
    """

    alphabet_size: int
    transition: tuple[tuple[int, ...], ...]

    def __post_init__(self):
        ell = self.alphabet_size
        if ell < 2:
            raise ValueError(f"alphabet_size must be at least 2, got {ell}")
        if len(self.transition) != ell:
            raise ValueError("transition matrix must have alphabet_size rows")
        for row in self.transition:
            if len(row) != ell:
                raise ValueError("transition matrix must be square")
            if any(x not in (0, 1) for x in row):
                raise ValueError("transition entries must be 0 or 1")
        mat = np.asarray(self.transition)
        if (mat.sum(axis=1) == 0).any():
            raise ValueError("transition matrix has an all-zero row")
        if (mat.sum(axis=0) == 0).any():
            raise ValueError("transition matrix has an all-zero column")

    @staticmethod
    def full_shift(alphabet_size: int) -> "SftSpec":
        row = (1,) * alphabet_size
        return SftSpec(alphabet_size, (row,) * alphabet_size)

    @staticmethod
    def golden_mean() -> "SftSpec":
        """Two symbols, with 2 never followed by 2."""
        return SftSpec(2, ((1, 1), (1, 0)))

    @staticmethod
    def from_matrix(mat) -> "SftSpec":
        arr = np.asarray(mat, dtype=int)
        return SftSpec(arr.shape[0], tuple(tuple(int(x) for x in row) for row in arr))

    def allows(self, i: int, j: int) -> bool:
        """Whether symbol i may be followed by symbol j (1-based symbols)."""
        return self.transition[i - 1][j - 1] == 1

    def successors(self, i: int) -> tuple[int, ...]:
        return tuple(j + 1 for j, x in enumerate(self.transition[i - 1]) if x)

    def predecessors(self, j: int) -> tuple[int, ...]:
        return tuple(i + 1 for i in range(self.alphabet_size) if self.transition[i][j - 1])

    @cached_property
    def matrix(self) -> np.ndarray:
        arr = np.asarray(self.transition, dtype=np.int64)
        arr.setflags(write=False)
        return arr


@dataclass(frozen=True)
class SymbolWindow:
    """Symbols of a subshift point on the coordinate range [start, end].

    ``window[n]`` is the symbol at absolute coordinate ``n``; admissibility
    with respect to a given :class:`SftSpec` is checked by
    :func:`is_admissible`, not by the constructor, since a window does not
    carry its subshift.
    """

    start: int
    symbols: tuple[int, ...]

    def __post_init__(self):
        if not self.symbols:
            raise ValueError("a symbol window must contain at least one symbol")
        if any(s < 1 for s in self.symbols):
            raise ValueError("symbols are 1-based positive integers")

    @property
    def end(self) -> int:
        return self.start + len(self.symbols) - 1

    def __len__(self) -> int:
        return len(self.symbols)

    def covers(self, a: int, b: int) -> bool:
        """Whether all coordinates of [a, b] lie in the window."""
        return self.start <= a and b <= self.end

    def __getitem__(self, n: int) -> int:
        if not self.start <= n <= self.end:
            raise IndexError(f"coordinate {n} outside window [{self.start}, {self.end}]")
        return self.symbols[n - self.start]

    def segment(self, a: int, b: int) -> tuple[int, ...]:
        """Symbols on the coordinate range [a, b], inclusive."""
        if not self.covers(a, b):
            raise ValueError(
                f"window [{self.start}, {self.end}] does not cover [{a}, {b}]"
            )
        return self.symbols[a - self.start : b - self.start + 1]


def is_admissible(spec: SftSpec, word: tuple[int, ...] | SymbolWindow) -> bool:
    """Whether every consecutive pair of the word is an allowed transition."""
    symbols = word.symbols if isinstance(word, SymbolWindow) else tuple(word)
    for s in symbols:
        if not 1 <= s <= spec.alphabet_size:
            raise ValueError(f"symbol {s} outside alphabet 1..{spec.alphabet_size}")
    return all(spec.allows(a, b) for a, b in zip(symbols, symbols[1:]))


def shift(window: SymbolWindow, k: int = 1) -> SymbolWindow:
    """Apply the left shift k times: coordinate n of the result reads n + k.

    The symbol tuple is unchanged; only the coordinate frame moves, so the
    result covers [start - k, end - k].
    """
    return SymbolWindow(window.start - k, window.symbols)


def metric_distance(w1: SymbolWindow, w2: SymbolWindow):
    """Distance e^{-N}, where N is the largest symmetric agreement radius.

    Both windows must cover coordinate 0.  If they agree on the whole common
    symmetric range ``|n| < M`` the distance is below the resolution of the
    inputs and :data:`INDETERMINATE` is returned.
    """
    for w in (w1, w2):
        if not w.covers(0, 0):
            raise ValueError("metric_distance requires both windows to cover coordinate 0")
    m = min(-w1.start, w1.end, -w2.start, w2.end) + 1
    for n in range(m):
        if w1[n] != w2[n] or w1[-n] != w2[-n]:
            return float(np.exp(-n))
    return INDETERMINATE


def wedge(w1: SymbolWindow, w2: SymbolWindow) -> SymbolWindow:
    """Splice past of w1 with future of w2 through a shared symbol at 0.

    The result reads w1 at coordinates n <= 0 and w2 at n >= 0; both inputs
    must cover 0 and carry the same symbol there.
    """
    for w in (w1, w2):
        if not w.covers(0, 0):
            raise ValueError("wedge requires both windows to cover coordinate 0")
    if w1[0] != w2[0]:
        raise ValueError(
            f"wedge requires matching symbols at coordinate 0, got {w1[0]} and {w2[0]}"
        )
    past = w1.segment(w1.start, 0)
    future = w2.segment(1, w2.end) if w2.end >= 1 else ()
    return SymbolWindow(w1.start, past + future)


def fixed_points(spec: SftSpec) -> tuple[int, ...]:
    """Symbols j whose constant sequence is admissible (transition j -> j)."""
    return tuple(j for j in range(1, spec.alphabet_size + 1) if spec.allows(j, j))


def mixing_constant(spec: SftSpec, max_power: int | None = None):
    """Least p with all entries of transition^p positive, or NOT_MIXING.

    For a primitive 0/1 matrix of size l the least such p is at most
    l^2 - 2l + 2, which is the default cap.
    """
    ell = spec.alphabet_size
    if max_power is None:
        max_power = ell * ell - 2 * ell + 2
    reach = spec.matrix.astype(bool)
    base = spec.matrix.astype(bool)
    for p in range(1, max_power + 1):
        if reach.all():
            return p
        reach = (reach @ base) > 0
    return NOT_MIXING if not reach.all() else max_power + 1


def admissible_words(spec: SftSpec, length: int) -> Iterator[tuple[int, ...]]:
    """All admissible words of the given length, in lexicographic order."""
    if length < 1:
        raise ValueError("word length must be at least 1")
    symbols = range(1, spec.alphabet_size + 1)

    def extend(prefix: tuple[int, ...]) -> Iterator[tuple[int, ...]]:
        if len(prefix) == length:
            yield prefix
            return
        for s in spec.successors(prefix[-1]):
            yield from extend(prefix + (s,))

    for first in symbols:
        yield from extend((first,))


def count_admissible_words(spec: SftSpec, length: int) -> int:
    """Number of admissible words of the given length (via matrix powers)."""
    if length < 1:
        raise ValueError("word length must be at least 1")
    vec = np.ones(spec.alphabet_size, dtype=object)
    mat = spec.matrix.astype(object)
    for _ in range(length - 1):
        vec = mat @ vec
    return int(vec.sum())
