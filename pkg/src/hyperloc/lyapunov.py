"""Lyapunov curves, deviation probabilities, and rate fits.

Monte Carlo estimates of L(E) from renormalized transfer-matrix products,
vectorized across replicas, for shift measures and for the two torus
systems.  Deviation probabilities come with Wilson intervals, exponential
rates are always fit outputs (never assumed constants), and the Azuma
evaluator is the one closed-form bound the experiments compare against.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, DegenerateError
from .measures import ShiftMeasure
from .sampling import LocallyConstantFn, TorusSystem, potential
from .seeding import derive_seed, rng_from_seed
from .symbolic import SymbolWindow, shift

_Z95 = 1.959963984540054
#: Deterministic potentials have zero replica spread, so the zero-exponent
#: flag needs a floor above the elliptic finite-size level log(n)/n.
_FLAG_FLOOR_SCALE = 20.0


def _transfer_log_norm_block(values: np.ndarray, E: float) -> np.ndarray:
    """log ||A_n^E|| per row of a (replicas, n) value array.

    Same renormalized recursion as the scalar kernel in cocycle, kept in
    sync with it: the product is rescaled by its operator norm every step
    and the logs are accumulated.
    """
    values = np.asarray(values, dtype=float)
    if values.ndim != 2:
        raise ValueError("values must be a (replicas, n) array")
    R, n = values.shape
    a = np.ones(R)
    b = np.zeros(R)
    c = np.zeros(R)
    d = np.ones(R)
    sigma = np.zeros(R)
    for k in range(n):
        x = E - values[:, k]
        a, b, c, d = x * a - c, x * b - d, a.copy(), b.copy()
        s = np.hypot(0.5 * (a + d), 0.5 * (c - b)) + np.hypot(
            0.5 * (a - d), 0.5 * (c + b)
        )
        a /= s
        b /= s
        c /= s
        d /= s
        sigma += np.log(s)
    return sigma


def _sample_stationary_symbols(m: ShiftMeasure, count: int, rng) -> np.ndarray:
    cum = np.cumsum(m.pi)
    u = rng.random(count)
    out = 1 + (u[:, None] >= cum[None, :]).sum(axis=1)
    return np.minimum(out, m.spec.alphabet_size)


def _sample_symbol_block(m: ShiftMeasure, replicas: int, length: int, rng) -> np.ndarray:
    """(replicas, length) symbol rows drawn from the stationary chain."""
    ell = m.spec.alphabet_size
    cum = np.cumsum(m.P, axis=1)
    out = np.empty((replicas, length), dtype=np.int64)
    out[:, 0] = _sample_stationary_symbols(m, replicas, rng)
    for k in range(1, length):
        u = rng.random(replicas)
        rows = cum[out[:, k - 1] - 1]
        nxt = 1 + (u[:, None] >= rows).sum(axis=1)
        out[:, k] = np.minimum(nxt, ell)
    return out


def _lc_values_from_symbols(f: LocallyConstantFn, symbols: np.ndarray) -> np.ndarray:
    """Evaluate a locally constant function along symbol rows.

    Rows carry the coordinates [-radius, n - 1 + radius]; the output has one
    value per coordinate 0 <= k <= n - 1, looked up through rolling codes.
    """
    ell = f.spec.alphabet_size
    width = 2 * f.radius + 1
    table = np.full(ell**width, np.nan)
    for word, value in f.table.items():
        code = 0
        for s in word:
            code = code * ell + (s - 1)
        table[code] = value
    R, total = symbols.shape
    n = total - width + 1
    codes = np.zeros((R, n), dtype=np.int64)
    for t in range(width):
        codes = codes * ell + (symbols[:, t : t + n] - 1)
    vals = table[codes]
    if np.isnan(vals).any():
        raise ConfigError("sampled an inadmissible word; measure and function disagree")
    return vals


_DOUBLING_BITS = 53


def _doubling_values(system: TorusSystem, replicas: int, n: int, rng) -> np.ndarray:
    """Observable along doubling-map orbits with Lebesgue-distributed starts.

    Float iteration of x -> 2x mod 1 shifts bits out until the dyadic start
    collapses, so the orbit is realized instead as a sliding window over an
    i.i.d. fair bit stream: x_k is read off bits k+1, ..., k+53.
    """
    bits = rng.integers(0, 2, size=(replicas, n + _DOUBLING_BITS - 1))
    weights = 0.5 ** np.arange(1, _DOUBLING_BITS + 1)
    windows = np.lib.stride_tricks.sliding_window_view(bits, _DOUBLING_BITS, axis=1)
    xs = windows @ weights
    obs = np.vectorize(system.observable, otypes=[float])
    return obs(xs)


def _cat_values(system: TorusSystem, replicas: int, n: int, rng) -> np.ndarray:
    x = rng.random(replicas)
    y = rng.random(replicas)
    out = np.empty((replicas, n))
    obs = system.observable
    for k in range(n):
        for i in range(replicas):
            out[i, k] = obs((x[i], y[i]))
        x, y = (2.0 * x + y) % 1.0, (x + y) % 1.0
    return out


def _potential_block(m, f, n: int, replicas: int, seed: int) -> np.ndarray:
    """(replicas, n) potential values for either base system."""
    if isinstance(m, TorusSystem):
        rng = rng_from_seed(seed)
        if m.kind == "doubling":
            return _doubling_values(m, replicas, n, rng)
        if n > 1000:
            import warnings

            warnings.warn(
                f"float orbits of length {n} for the toral automorphism are "
                "beyond the rounding-amplification cap",
                stacklevel=3,
            )
        return _cat_values(m, replicas, n, rng)
    if not isinstance(m, ShiftMeasure):
        raise ConfigError("base system must be a ShiftMeasure or a TorusSystem")
    if f is None:
        raise ConfigError("shift sampling needs a potential function")
    if f.spec != m.spec:
        raise ConfigError("sampling function and measure use different subshifts")
    rng = rng_from_seed(seed)
    r = f.radius
    symbols = _sample_symbol_block(m, replicas, n + 2 * r, rng)
    if isinstance(f, LocallyConstantFn):
        return _lc_values_from_symbols(f, symbols)
    out = np.empty((replicas, n))
    for i in range(replicas):
        window = SymbolWindow(-r, tuple(int(s) for s in symbols[i]))
        out[i] = potential(f, window, n)
    return out


def estimate_lyapunov(m, f, E: float, n: int, replicas: int, seed: int):
    """Mean finite-scale exponent over independent replicas.

    Returns (estimate, std_error).  Each replica draws its own orbit from a
    seed derived by index, g_n is computed with per-step renormalization,
    and the replica order is fixed, so results are reproducible bit for bit.
    """
    if n < 1:
        raise ConfigError("n must be at least 1")
    if replicas < 2:
        raise ConfigError("at least 2 replicas are needed for a standard error")
    values = _potential_block(m, f, n, replicas, derive_seed(seed, 0))
    g = _transfer_log_norm_block(values, float(E)) / n
    estimate = float(g.mean())
    std_error = float(g.std(ddof=1) / math.sqrt(replicas))
    return estimate, std_error


@dataclass(frozen=True)
class LyapunovCurve:
    """L(E) estimates on an energy grid with zero-exponent candidate flags."""

    energies: tuple
    estimates: tuple
    std_errors: tuple
    flagged: tuple
    n: int
    replicas: int
    seed: int

    def __post_init__(self):
        k = len(self.energies)
        if not (len(self.estimates) == len(self.std_errors) == len(self.flagged) == k):
            raise ConfigError("curve columns must have equal length")
        if any(e < 0 for e in self.estimates):
            raise ConfigError("Lyapunov estimates must be nonnegative")
        if any(s < 0 for s in self.std_errors):
            raise ConfigError("standard errors must be nonnegative")

    def flagged_energies(self) -> tuple:
        return tuple(E for E, fl in zip(self.energies, self.flagged) if fl)


def lyapunov_curve(
    m,
    f,
    energies,
    n: int,
    replicas: int,
    seed: int,
    flag_floor: float | None = None,
) -> LyapunovCurve:
    """estimate_lyapunov over a grid, flagging zero-exponent candidates.

    A point is flagged when its estimate falls below max(3 std errors,
    flag_floor); the default floor 20/n sits above the log(n)/n finite-size
    level of elliptic energies, where deterministic potentials would
    otherwise never be flagged (their replica spread is exactly zero).
    """
    energies = [float(E) for E in energies]
    floor = _FLAG_FLOOR_SCALE / n if flag_floor is None else float(flag_floor)
    ests, ses, flags = [], [], []
    for idx, E in enumerate(energies):
        est, se = estimate_lyapunov(m, f, E, n, replicas, derive_seed(seed, idx))
        ests.append(est)
        ses.append(se)
        flags.append(bool(est < max(3.0 * se, floor)))
    return LyapunovCurve(
        energies=tuple(energies),
        estimates=tuple(ests),
        std_errors=tuple(ses),
        flagged=tuple(flags),
        n=n,
        replicas=replicas,
        seed=int(seed),
    )


def exceptional_energies(curve: LyapunovCurve, eta: float = 0.1):
    """Intervals to exclude: an eta-neighborhood around each flagged point."""
    return tuple((E - eta, E + eta) for E in curve.flagged_energies())


def wilson_interval(successes: int, trials: int, z: float = _Z95):
    """95% score interval for a binomial proportion."""
    if trials < 1:
        raise ConfigError("trials must be positive")
    p = successes / trials
    denom = 1.0 + z * z / trials
    center = (p + z * z / (2 * trials)) / denom
    half = z * math.sqrt(p * (1 - p) / trials + z * z / (4 * trials * trials)) / denom
    # the closed form gives exactly 0 (resp. 1) at the boundary counts, but
    # the float evaluation leaves ~1e-18 residue; pin the exact endpoints
    lo = 0.0 if successes == 0 else max(0.0, center - half)
    hi = 1.0 if successes == trials else min(1.0, center + half)
    return lo, hi


def deviation_probability(m, f, E, n, epsilon, L_ref, replicas, seed):
    """Fraction of replicas with |g_n - L_ref| > epsilon, with a Wilson CI.

    The replica sample depends only on (inputs, seed), so for a fixed seed
    the event is nested in epsilon and the estimate is exactly monotone.
    """
    if epsilon < 0:
        raise ConfigError("epsilon must be nonnegative")
    values = _potential_block(m, f, n, replicas, derive_seed(seed, 0))
    g = _transfer_log_norm_block(values, float(E)) / n
    hits = int(np.count_nonzero(np.abs(g - L_ref) > epsilon))
    p_hat = hits / replicas
    return p_hat, wilson_interval(hits, replicas)


@dataclass(frozen=True)
class DeviationReport:
    """Deviation probabilities over n with the fitted exponential rate."""

    E: float
    epsilon: float
    n_values: tuple
    p_hats: tuple
    ci_half_widths: tuple
    fitted_c: float | None
    fitted_logC: float | None
    r_squared: float | None
    fitted_c_se: float | None = None
    below_resolution: bool = False

    def __post_init__(self):
        if any(not (0.0 <= p <= 1.0) for p in self.p_hats):
            raise ConfigError("p_hats must lie in [0, 1]")
        if any(b <= a for a, b in zip(self.n_values, self.n_values[1:])):
            raise ConfigError("n_values must be strictly increasing")


def ldt_rate_fit(
    E: float,
    epsilon: float,
    n_values,
    p_hats,
    replicas: int,
    ci_half_widths=None,
) -> DeviationReport:
    """Least-squares fit of log p_hat = logC - c n.

    Zero counts are replaced by the one-sided 95% upper bound
    1 - 0.95^(1/replicas) so the logs stay finite; if every count is zero
    the rate is below resolution and no fit is reported.
    """
    n_values = tuple(int(v) for v in n_values)
    p_hats = tuple(float(p) for p in p_hats)
    if ci_half_widths is None:
        ci_half_widths = tuple(0.0 for _ in p_hats)
    else:
        ci_half_widths = tuple(float(w) for w in ci_half_widths)
    if len(n_values) != len(p_hats) or len(p_hats) != len(ci_half_widths):
        raise ConfigError("n_values, p_hats, ci_half_widths must align")
    if len(n_values) < 2:
        raise ConfigError("need at least two scales to fit a rate")
    if replicas < 1:
        raise ConfigError("replicas must be positive")
    floor = 1.0 - 0.95 ** (1.0 / replicas)
    if all(p == 0.0 for p in p_hats):
        return DeviationReport(
            E=float(E),
            epsilon=float(epsilon),
            n_values=n_values,
            p_hats=p_hats,
            ci_half_widths=ci_half_widths,
            fitted_c=None,
            fitted_logC=None,
            r_squared=None,
            below_resolution=True,
        )
    xs = np.array(n_values, dtype=float)
    ys = np.log([max(p, floor) for p in p_hats])
    k = xs.size
    design = np.column_stack([np.ones(k), -xs])
    coef, *_ = np.linalg.lstsq(design, ys, rcond=None)
    logC, c = float(coef[0]), float(coef[1])
    fitted = design @ coef
    ss_res = float(((ys - fitted) ** 2).sum())
    ss_tot = float(((ys - ys.mean()) ** 2).sum())
    if ss_tot < 1e-30:
        r2 = 1.0 if ss_res < 1e-30 else 0.0
    else:
        r2 = 1.0 - ss_res / ss_tot
    if k > 2:
        resid_var = ss_res / (k - 2)
        cov = resid_var * np.linalg.inv(design.T @ design)
        c_se = float(math.sqrt(max(cov[1, 1], 0.0)))
    else:
        c_se = 0.0
    return DeviationReport(
        E=float(E),
        epsilon=float(epsilon),
        n_values=n_values,
        p_hats=p_hats,
        ci_half_widths=ci_half_widths,
        fitted_c=c,
        fitted_logC=logC,
        r_squared=r2,
        fitted_c_se=c_se,
    )


def holder_fit(curve: LyapunovCurve, window) -> tuple:
    """Fit |L(E) - L(E')| <= C |E - E'|^beta on a window of the curve.

    Regresses log-differences over all grid pairs inside the window;
    returns (C, beta).
    """
    lo, hi = float(window[0]), float(window[1])
    pts = [
        (E, est)
        for E, est in zip(curve.energies, curve.estimates)
        if lo <= E <= hi and est > 0
    ]
    if len(pts) < 6:
        raise ConfigError(
            f"window [{lo}, {hi}] holds {len(pts)} positive points; need >= 6"
        )
    xs, ys = [], []
    for i in range(len(pts)):
        for j in range(i + 1, len(pts)):
            dE = abs(pts[i][0] - pts[j][0])
            dL = abs(pts[i][1] - pts[j][1])
            if dE < 1e-300 or dL < 1e-14:
                continue
            xs.append(math.log(dE))
            ys.append(math.log(dL))
    if not xs:
        raise DegenerateError("curve is constant on the window; no exponent to fit")
    design = np.column_stack([np.ones(len(xs)), np.array(xs)])
    coef, *_ = np.linalg.lstsq(design, np.array(ys), rcond=None)
    return float(math.exp(coef[0])), float(coef[1])


def block_average_check(
    m,
    f,
    omega: SymbolWindow,
    E: float,
    n: int,
    r: int,
    s0: int = 0,
    L_ref: float | None = None,
) -> float:
    """|L_ref - average of g_n over r consecutive length-n blocks|.

    The blocks start at s0, ns + s0 for s < r; a window shorter than the
    required range fails in the potential evaluation with the exact bounds.
    """
    if L_ref is None:
        raise ConfigError("L_ref is required; pass a reference exponent")
    if n < 1 or r < 1:
        raise ConfigError("n and r must be positive")
    vals = potential(f, shift(omega, s0), n * r)
    rows = vals.reshape(r, n)
    g = _transfer_log_norm_block(rows, float(E)) / n
    return float(abs(L_ref - g.mean()))


def azuma_bound(epsilon: float, n: int, a: float = 1.0, c: float = 1.0) -> float:
    """exp(-c epsilon^2 n / (2 a^2)) for increments bounded by a."""
    if a <= 0:
        raise ConfigError("a must be positive")
    if n < 1:
        raise ConfigError("n must be at least 1")
    if epsilon < 0:
        raise ConfigError("epsilon must be nonnegative")
    return math.exp(-c * epsilon * epsilon * n / (2.0 * a * a))
