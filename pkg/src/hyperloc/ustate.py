"""Projective dynamics over the shift and approximation of u-states.

The energy cocycle acts on angles in [0, pi).  Fiber measures are carried
per past-class: an admissible word of depth D standing for the symbols on
[-D+1, 0], with the angle circle cut into G uniform bins.  Two estimators
are provided for the same object and kept deliberately independent: a
Monte Carlo Cesaro average of push-forwards along sampled unstable fibers,
and a deterministic fixed point of the discretized averaged transfer
operator.  Pairing either against log-norms of the step matrices yields
the Furstenberg estimate of the Lyapunov exponent.

Class words determine the past-dependent step exactly once the depth
reaches 2 * radius + 2 for a locally constant generator; below that the
representative padding truncates the dependence and the result is only as
good as the geometric tail it discards.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from .cocycle import ReducedCocycle, ScaledMatrix, cocycle_product
from .errors import ConfigError, DegenerateError, NotConvergedError
from .measures import ShiftMeasure
from .sampling import LocallyConstantFn
from .symbolic import SftSpec, SymbolWindow, admissible_words, is_admissible, shift

_SUM_TOL = 1e-10
_STATE_CELL_CAP = 50_000_000


@dataclass(frozen=True)
class ProjectivePoint:
    """A direction on the projective line, stored as an angle in [0, pi)."""

    theta: float

    def __post_init__(self):
        t = float(self.theta) % math.pi
        if t >= math.pi:
            t = 0.0
        object.__setattr__(self, "theta", t)

    def vector(self) -> np.ndarray:
        return np.array([math.cos(self.theta), math.sin(self.theta)])

    @staticmethod
    def from_vector(v) -> "ProjectivePoint":
        v = np.asarray(v, dtype=float)
        if not np.all(np.isfinite(v)) or math.hypot(v[0], v[1]) == 0.0:
            raise DegenerateError("cannot projectivize a zero or non-finite vector")
        return ProjectivePoint(math.atan2(v[1], v[0]))


def projective_action(M, p: ProjectivePoint) -> ProjectivePoint:
    """Direction of M (cos theta, sin theta) for an invertible 2x2 matrix."""
    m = np.asarray(M, dtype=float)
    w = m @ p.vector()
    if not np.all(np.isfinite(w)) or math.hypot(w[0], w[1]) < 1e-300:
        raise DegenerateError(
            "projective image vanished; the matrix is singular along the input"
        )
    return ProjectivePoint(math.atan2(w[1], w[0]))


def _bin_centers(grid_size: int) -> np.ndarray:
    return (np.arange(grid_size) + 0.5) * math.pi / grid_size


def _angles_to_bins(angles: np.ndarray, grid_size: int) -> np.ndarray:
    idx = np.floor((np.asarray(angles) % math.pi) / math.pi * grid_size).astype(int)
    return np.clip(idx, 0, grid_size - 1)


@dataclass(frozen=True)
class ProjectiveMeasure:
    """Angle distributions per past-class.

    ``weights`` maps an admissible word of length ``depth`` (the symbols on
    [-depth+1, 0]) to a nonnegative length-``grid_size`` vector summing to 1.
    The map may be partial when produced by sampling; deterministic solvers
    populate every class.  ``residual`` carries the final fixed-point defect
    when one was computed.
    """

    spec: SftSpec
    depth: int
    grid_size: int
    weights: dict
    residual: float | None = None

    def __post_init__(self):
        if self.depth < 1:
            raise ConfigError("depth must be at least 1")
        if self.grid_size < 2:
            raise ConfigError("grid_size must be at least 2")
        if not self.weights:
            raise ConfigError("a projective measure needs at least one class")
        clean = {}
        for word, vec in self.weights.items():
            word = tuple(int(s) for s in word)
            if len(word) != self.depth:
                raise ConfigError(
                    f"class word {word} has length {len(word)}, expected {self.depth}"
                )
            if not is_admissible(self.spec, word):
                raise ConfigError(f"class word {word} is not admissible")
            vec = np.asarray(vec, dtype=float)
            if vec.shape != (self.grid_size,):
                raise ConfigError(
                    f"class {word}: weight vector has shape {vec.shape}, "
                    f"expected ({self.grid_size},)"
                )
            if not np.all(np.isfinite(vec)) or vec.min() < -1e-12:
                raise ConfigError(f"class {word}: weights must be finite and >= 0")
            total = float(vec.sum())
            if abs(total - 1.0) > _SUM_TOL:
                raise ConfigError(
                    f"class {word}: weights sum to {total!r}, expected 1"
                )
            clean[word] = np.clip(vec, 0.0, None)
        object.__setattr__(self, "weights", clean)

    @property
    def bin_centers(self) -> np.ndarray:
        return _bin_centers(self.grid_size)

    @property
    def classes(self) -> list:
        return sorted(self.weights)

    @staticmethod
    def uniform(spec: SftSpec, depth: int, grid_size: int) -> "ProjectiveMeasure":
        vec = np.full(grid_size, 1.0 / grid_size)
        words = {w: vec.copy() for w in admissible_words(spec, depth)}
        return ProjectiveMeasure(spec, depth, grid_size, words)

    @staticmethod
    def point_mass(
        spec: SftSpec, depth: int, grid_size: int, point: ProjectivePoint
    ) -> "ProjectiveMeasure":
        vec = np.zeros(grid_size)
        vec[_angles_to_bins(np.array([point.theta]), grid_size)[0]] = 1.0
        words = {w: vec.copy() for w in admissible_words(spec, depth)}
        return ProjectiveMeasure(spec, depth, grid_size, words)

    def tv_distance(self, other: "ProjectiveMeasure", class_weights=None) -> float:
        """Total-variation distance, aggregated over classes.

        With ``class_weights`` (a map word -> mass) the per-class distances
        are averaged under those masses, renormalized over the shared
        classes; otherwise they are averaged uniformly.  The two measures
        must carry the same classes.
        """
        if (self.grid_size, self.depth) != (other.grid_size, other.depth):
            raise ValueError("projective measures live on different grids")
        if set(self.weights) != set(other.weights):
            missing = set(self.weights) ^ set(other.weights)
            raise ValueError(
                f"class sets differ; {len(missing)} classes are not shared"
            )
        words = self.classes
        per_class = np.array(
            [0.5 * np.abs(self.weights[w] - other.weights[w]).sum() for w in words]
        )
        if class_weights is None:
            return float(per_class.mean())
        masses = np.array([float(class_weights[w]) for w in words])
        total = masses.sum()
        if total <= 0:
            raise ValueError("class weights must have positive total mass")
        return float((per_class * masses).sum() / total)

    def angle_marginal(self, class_weights) -> np.ndarray:
        """Mix the class conditionals under the given class masses."""
        out = np.zeros(self.grid_size)
        total = 0.0
        for word, vec in self.weights.items():
            mass = float(class_weights[word])
            out += mass * vec
            total += mass
        if total <= 0:
            raise ValueError("class weights must have positive total mass")
        return out / total


def _pad_to_range(spec: SftSpec, word, lo: int, hi: int) -> SymbolWindow:
    """Extend a class word (ending at coordinate 0) to cover [lo, hi].

    Padding is lexicographically minimal on both sides, so representatives
    are deterministic.
    """
    syms = [int(s) for s in word]
    start = -(len(syms) - 1)
    while start > lo:
        syms.insert(0, min(spec.predecessors(syms[0])))
        start -= 1
    end = 0
    while end < hi:
        syms.append(min(spec.successors(syms[-1])))
        end += 1
    return SymbolWindow(start, tuple(syms))


def class_mass(m: ShiftMeasure, word) -> float:
    """Stationary mass of the cylinder a depth-D class stands for."""
    P = m.P
    pi = m.pi
    out = float(pi[word[0] - 1])
    for a, b in zip(word[:-1], word[1:]):
        out *= float(P[a - 1, b - 1])
    return out


def _class_matrices(m: ShiftMeasure, f, E, depth: int, matrix_map, tol: float):
    """Per-class step matrices M_c for all admissible depth-D words.

    M_c governs the step into the last coordinate of c.  Without an
    override this is the holonomy-reduced energy step evaluated on a
    deterministic representative of the class.
    """
    words = list(admissible_words(m.spec, depth))
    if matrix_map is not None:
        mats = {}
        for w in words:
            mat = np.asarray(matrix_map(w), dtype=float)
            if mat.shape != (2, 2):
                raise ConfigError("matrix_map must return 2x2 matrices")
            mats[w] = mat
        return words, mats
    if f is None:
        raise ConfigError("either a sampling function or a matrix_map is required")
    if f.spec != m.spec:
        raise ConfigError("sampling function and measure use different subshifts")
    if isinstance(f, LocallyConstantFn) and depth < 2 * f.radius + 2:
        raise ConfigError(
            f"depth {depth} does not determine the reduced step for radius "
            f"{f.radius}; use depth >= {2 * f.radius + 2}"
        )
    red = ReducedCocycle(f, E, tol=tol)
    lo, hi = red.required_range()
    mats = {}
    for w in words:
        rep = _pad_to_range(m.spec, w, lo, hi)
        mats[w] = red.matrix(rep)
    return words, mats


def _check_state_size(n_classes: int, grid_size: int) -> None:
    if n_classes * grid_size > _STATE_CELL_CAP:
        raise ConfigError(
            f"{n_classes} classes x {grid_size} bins exceeds the "
            f"{_STATE_CELL_CAP} cell cap; reduce depth or grid"
        )


def _reversed_mixing(m: ShiftMeasure, words, index):
    """Predecessor lists for the averaged operator.

    A class c' = (w1..wD) is fed from the classes (i, w1..w(D-1)); under the
    stationary measure the mixture coefficient is the time-reversed
    transition pi_i P[i, w1] / pi_{w1}, independent of the rest of the word.
    """
    P = m.P
    pi = m.pi
    preds = []
    for w in words:
        first = w[0]
        rows = []
        for i in m.spec.predecessors(first):
            prev = (i,) + w[:-1]
            if prev in index:
                rows.append((index[prev], float(pi[i - 1] * P[i - 1, first - 1] / pi[first - 1])))
        total = sum(c for _, c in rows)
        if abs(total - 1.0) > 1e-9:
            raise ConfigError(
                f"class {w}: reversed mixing weights sum to {total!r}; "
                "the class graph is not closed at this depth"
            )
        preds.append(rows)
    return preds


def _bin_maps(mats, words, grid_size: int) -> np.ndarray:
    centers = _bin_centers(grid_size)
    V = np.vstack([np.cos(centers), np.sin(centers)])
    out = np.empty((len(words), grid_size), dtype=int)
    for k, w in enumerate(words):
        img = mats[w] @ V
        norms = np.hypot(img[0], img[1])
        if norms.min() < 1e-300:
            raise DegenerateError(f"class {w}: step matrix is singular")
        out[k] = _angles_to_bins(np.arctan2(img[1], img[0]), grid_size)
    return out


def _apply_operator(W: np.ndarray, preds, bin_maps: np.ndarray) -> np.ndarray:
    out = np.zeros_like(W)
    for k in range(W.shape[0]):
        mix = np.zeros(W.shape[1])
        for idx, coef in preds[k]:
            mix += coef * W[idx]
        np.add.at(out[k], bin_maps[k], mix)
    return out


def approximate_u_state(
    m: ShiftMeasure,
    f,
    E: float,
    depth: int = 6,
    grid_size: int = 720,
    iters: int = 2000,
    tol: float = 1e-8,
    matrix_map=None,
) -> ProjectiveMeasure:
    """Fixed point of the discretized averaged transfer operator.

    Starting from the uniform family, the per-class conditionals are mixed
    under the time-reversed chain and pushed through the class step matrix,
    binned by image angle, until the worst per-class total-variation change
    drops below ``tol``.  Elliptic energies where no attracting direction
    exists make the iteration cycle instead of settling; that surfaces as
    NotConvergedError and is deliberate.
    """
    words, mats = _class_matrices(m, f, E, depth, matrix_map, tol=min(tol, 1e-10))
    _check_state_size(len(words), grid_size)
    index = {w: k for k, w in enumerate(words)}
    preds = _reversed_mixing(m, words, index)
    bin_maps = _bin_maps(mats, words, grid_size)
    W = np.full((len(words), grid_size), 1.0 / grid_size)
    residual = math.inf
    for _ in range(iters):
        W_next = _apply_operator(W, preds, bin_maps)
        residual = float(np.abs(W_next - W).sum(axis=1).max() * 0.5)
        W = W_next
        if residual < tol:
            break
    else:
        raise NotConvergedError(
            f"u-state iteration stalled at residual {residual:.3e} "
            f"after {iters} sweeps (tol {tol:.1e})",
            achieved=residual,
        )
    weights = {w: W[k] for k, w in enumerate(words)}
    return ProjectiveMeasure(m.spec, depth, grid_size, weights, residual=residual)


def push_forward_once(
    state: ProjectiveMeasure,
    m: ShiftMeasure,
    f,
    E: float,
    matrix_map=None,
) -> ProjectiveMeasure:
    """One application of the discretized averaged transfer operator."""
    words, mats = _class_matrices(m, f, E, state.depth, matrix_map, tol=1e-10)
    if set(words) != set(state.weights):
        raise ConfigError("state does not carry every class at this depth")
    index = {w: k for k, w in enumerate(words)}
    preds = _reversed_mixing(m, words, index)
    bin_maps = _bin_maps(mats, words, state.grid_size)
    W = np.vstack([state.weights[w] for w in words])
    W_next = _apply_operator(W, preds, bin_maps)
    weights = {w: W_next[k] for k, w in enumerate(words)}
    return ProjectiveMeasure(m.spec, state.depth, state.grid_size, weights)


def furstenberg_integral(
    mu_state: ProjectiveMeasure,
    m: ShiftMeasure,
    f,
    E: float,
    matrix_map=None,
) -> float:
    """Pair a projective state with step log-norms to estimate L(E).

    Integrates log ||M v|| where M is the class step matrix of the one-step
    extension (c, j), weighted by the class mass, the transition P[c_D, j],
    and the class conditional of c.  When ``mu_state`` is partial (a sampled
    estimate), the class masses are renormalized over the classes present.
    """
    depth = mu_state.depth
    words, mats = _class_matrices(m, f, E, depth, matrix_map, tol=1e-10)
    centers = mu_state.bin_centers
    V = np.vstack([np.cos(centers), np.sin(centers)])
    log_norms = {}
    for w in words:
        img = mats[w] @ V
        norms = np.hypot(img[0], img[1])
        if norms.min() < 1e-300:
            raise DegenerateError(f"class {w}: step matrix is singular")
        log_norms[w] = np.log(norms)
    P = m.P
    total = 0.0
    mass = 0.0
    for word, vec in mu_state.weights.items():
        nu = class_mass(m, word)
        if nu == 0.0:
            continue
        mass += nu
        last = word[-1]
        for j in m.spec.successors(last):
            succ = word[1:] + (j,)
            p_step = float(P[last - 1, j - 1])
            if p_step == 0.0:
                continue
            total += nu * p_step * float(vec @ log_norms[succ])
    if mass <= 0.0:
        raise ConfigError("projective state carries no class mass")
    return total / mass


@dataclass(frozen=True)
class CylinderFrequency:
    """Observed vs exact mass of one cylinder word along sampled orbits."""

    word: tuple
    observed: float
    expected: float
    std_error: float


@dataclass(frozen=True)
class CesaroResult:
    measure: ProjectiveMeasure
    cylinder_frequencies: tuple


def _encode_words(words, alphabet_size: int):
    codes = {}
    for w in words:
        c = 0
        for s in w:
            c = c * alphabet_size + (s - 1)
        codes[w] = c
    return codes


def _sample_future_block(m: ShiftMeasure, last_symbols, length, rng):
    """Vectorized continuation of the chain; rows advance independently."""
    ell = m.spec.alphabet_size
    cum = np.cumsum(m.P, axis=1)
    cur = np.asarray(last_symbols, dtype=int)
    out = np.empty((cur.size, length), dtype=int)
    for k in range(length):
        u = rng.random(cur.size)
        rows = cum[cur - 1]
        cur = 1 + (u[:, None] >= rows).sum(axis=1)
        np.minimum(cur, ell, out=cur)
        out[:, k] = cur
    return out


def cesaro_orbit_average(
    m: ShiftMeasure,
    f,
    E: float,
    initial,
    n: int,
    samples: int,
    seed: int,
    depth: int = 6,
    grid_size: int = 720,
    matrix_map=None,
) -> CesaroResult:
    """Monte Carlo Cesaro average of projective push-forwards.

    ``initial`` is a pair (past window ending at coordinate 0, starting
    direction): the past is frozen, futures are sampled from the chain, and
    the direction is pushed through the past-dependent steps, recording the
    angle bin against the current past-class at each of the n times.  Base
    cylinder frequencies for words up to length 3 are tallied alongside as
    the weak-* check on the sampled orbits.
    """
    window, point = initial
    if not isinstance(point, ProjectivePoint):
        raise ConfigError("initial must pair a SymbolWindow with a ProjectivePoint")
    if window.end != 0:
        raise ConfigError("the initial past window must end at coordinate 0")
    if not window.covers(-(depth - 1), 0):
        raise ConfigError(
            f"the initial past window must cover [{-(depth - 1)}, 0] for depth {depth}"
        )
    if n < 1 or samples < 1:
        raise ConfigError("n and samples must be positive")
    words, mats = _class_matrices(m, f, E, depth, matrix_map, tol=1e-10)
    _check_state_size(len(words), grid_size)
    ell = m.spec.alphabet_size
    code_span = ell**depth
    if code_span > 4_000_000:
        raise ConfigError(f"depth {depth} is too deep to tabulate over {ell} symbols")
    codes = _encode_words(words, ell)
    lut = np.full((code_span, 2, 2), np.nan)
    for w, c in codes.items():
        lut[c] = mats[w]

    rng = np.random.default_rng(int(seed))
    n_fut = n - 1
    past = window.segment(-(depth - 1), 0)
    start_code = codes[past]
    code = np.full(samples, start_code, dtype=np.int64)
    future = (
        _sample_future_block(m, np.full(samples, window[0]), n_fut, rng)
        if n_fut > 0
        else np.empty((samples, 0), dtype=int)
    )

    v = np.tile(point.vector(), (samples, 1))
    counts = np.zeros((code_span, grid_size))
    tail = code_span // ell
    for k in range(n):
        bins = _angles_to_bins(np.arctan2(v[:, 1], v[:, 0]), grid_size)
        np.add.at(counts, (code, bins), 1.0)
        if k == n - 1:
            break
        code = (code % tail) * ell + (future[:, k] - 1)
        step = lut[code]
        v = np.einsum("sij,sj->si", step, v)
        norms = np.hypot(v[:, 0], v[:, 1])
        if norms.min() < 1e-300 or not np.all(np.isfinite(norms)):
            raise DegenerateError("projective orbit hit a singular step")
        v /= norms[:, None]

    decode = {c: w for w, c in codes.items()}
    weights = {}
    for c in np.nonzero(counts.sum(axis=1))[0]:
        row = counts[c]
        weights[decode[int(c)]] = row / row.sum()
    measure = ProjectiveMeasure(m.spec, depth, grid_size, weights)

    freq_rows = []
    for length in (1, 2, 3):
        span = n_fut - length + 1
        if span < 1:
            continue
        word_codes = np.zeros((samples, span), dtype=np.int64)
        for t in range(length):
            word_codes = word_codes * ell + (future[:, t : t + span] - 1)
        for w in admissible_words(m.spec, length):
            c = 0
            for s in w:
                c = c * ell + (s - 1)
            per_sample = (word_codes == c).mean(axis=1)
            observed = float(per_sample.mean())
            sd = float(per_sample.std(ddof=1)) if samples > 1 else 0.0
            freq_rows.append(
                CylinderFrequency(
                    word=w,
                    observed=observed,
                    expected=class_mass(m, w),
                    std_error=sd / math.sqrt(samples),
                )
            )
    return CesaroResult(measure=measure, cylinder_frequencies=tuple(freq_rows))


@dataclass(frozen=True)
class OseledetsResult:
    """Finite-scale stable/unstable directions with convergence increments."""

    stable: ProjectivePoint
    unstable: ProjectivePoint
    stable_increment: float
    unstable_increment: float
    finite_scale_exponent: float


def _angle_gap(a: float, b: float) -> float:
    d = abs(a - b) % math.pi
    return min(d, math.pi - d)


def _product_over(f, omega, E, n, matrix_map, backward: bool) -> ScaledMatrix:
    if matrix_map is None:
        if backward:
            return cocycle_product(f, omega, E, -n).inverse()
        return cocycle_product(f, omega, E, n)
    out = ScaledMatrix.identity()
    if backward:
        for k in range(1, n + 1):
            out = out @ ScaledMatrix.from_matrix(matrix_map(shift(omega, -k)))
    else:
        for k in range(n - 1, -1, -1):
            out = out @ ScaledMatrix.from_matrix(matrix_map(shift(omega, k)))
    return out


def _split_directions(prod: ScaledMatrix, which: str):
    U, s, Vt = np.linalg.svd(prod.unit)
    if s[0] - s[1] < 1e-6:
        raise DegenerateError(
            f"singular values {s[0]:.9f}, {s[1]:.9f} are too close to split "
            "directions"
        )
    if which == "stable":
        return ProjectivePoint(math.atan2(Vt[1, 1], Vt[1, 0]))
    return ProjectivePoint(math.atan2(U[1, 0], U[0, 0]))


def oseledets_directions(
    f,
    omega: SymbolWindow,
    E: float,
    n: int,
    matrix_map=None,
) -> OseledetsResult:
    """Finite-scale Oseledets directions at depth n.

    The stable direction is the most-contracted right-singular direction of
    the forward product; the unstable one is the most-expanded output
    direction of the product over the backward history.  The angular moves
    from depth n-1 to n are reported so callers can see the convergence.
    """
    if n < 2:
        raise ConfigError("n must be at least 2 to report convergence increments")
    forward = _product_over(f, omega, E, n, matrix_map, backward=False)
    backward = _product_over(f, omega, E, n, matrix_map, backward=True)
    exponent = forward.log_norm / n
    if exponent < 0.02:
        warnings.warn(
            f"finite-scale exponent {exponent:.4f} is close to zero; "
            "the splitting may be unreliable",
            stacklevel=2,
        )
    stable = _split_directions(forward, "stable")
    unstable = _split_directions(backward, "unstable")
    fwd_prev = _product_over(f, omega, E, n - 1, matrix_map, backward=False)
    bwd_prev = _product_over(f, omega, E, n - 1, matrix_map, backward=True)
    return OseledetsResult(
        stable=stable,
        unstable=unstable,
        stable_increment=_angle_gap(stable.theta, _split_directions(fwd_prev, "stable").theta),
        unstable_increment=_angle_gap(
            unstable.theta, _split_directions(bwd_prev, "unstable").theta
        ),
        finite_scale_exponent=exponent,
    )
