"""Localization diagnostics: decay fits, double resonances, Green decay.

Eigenfunction decay rates are fitted per eigenpair and compared against the
Lyapunov reference; double resonances pair a near-eigenvalue box with an
anomalously small transfer exponent at a far offset, scanned over a
desk-scale truncation of the asymptotic ranges (the searched family is a
subset of the full one, so observed rarity is evidence, not proof).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import mpmath
import numpy as np
from scipy.linalg import eigvalsh_tridiagonal

from .cocycle import EnergyInterval
from .errors import ConfigError, NumericalError
from .greens import SpectralData, _prefix_suffix_dets, build_operator, eigensystem
from .lyapunov import (
    LyapunovCurve,
    _transfer_log_norm_block,
    lyapunov_curve,
    wilson_interval,
)
from .measures import ShiftMeasure, sample_window
from .sampling import potential
from .seeding import derive_seed
from .symbolic import SymbolWindow, shift

_NBAR_LOG_CAP = 700.0
_CORE_RADIUS = 5
_AMP_FLOOR = 1e-14
_MIN_FIT_SITES = 10


@dataclass(frozen=True)
class DecayFit:
    """Exponential decay rate of one eigenfunction."""

    eigenvalue: float
    center: int
    rate: float
    fit_residual: float
    L_at_E: float | None = None

    def __post_init__(self):
        if self.rate < 0:
            raise ConfigError("decay rate must be nonnegative")


def decay_fit(psi, E: float, L_at_E: float | None = None) -> DecayFit:
    """Least-squares decay rate of log |psi| against distance from its peak.

    Sites within the core radius 5 of the peak and amplitudes below 1e-14
    are excluded; fewer than 10 usable sites is an error.  A nonpositive
    slope (delocalized vector) is reported as rate 0.
    """
    psi = np.asarray(psi, dtype=float)
    if psi.ndim != 1 or psi.size < 2:
        raise ConfigError("psi must be a vector with at least 2 sites")
    norm = float(np.linalg.norm(psi))
    if abs(norm - 1.0) > 1e-8:
        raise ConfigError(f"psi must be l2-normalized; got norm {norm!r}")
    center = int(np.argmax(np.abs(psi)))
    dist = np.abs(np.arange(psi.size) - center)
    usable = (dist > _CORE_RADIUS) & (np.abs(psi) > _AMP_FLOOR)
    count = int(usable.sum())
    if count < _MIN_FIT_SITES:
        raise ConfigError(
            f"only {count} usable sites outside the core; need {_MIN_FIT_SITES}"
        )
    x = dist[usable].astype(float)
    y = np.log(np.abs(psi[usable]))
    design = np.column_stack([np.ones(count), x])
    coef, *_ = np.linalg.lstsq(design, y, rcond=None)
    resid = float(np.sqrt(((design @ coef - y) ** 2).mean()))
    return DecayFit(
        eigenvalue=float(E),
        center=center,
        rate=max(0.0, -float(coef[1])),
        fit_residual=resid,
        L_at_E=L_at_E,
    )


@dataclass(frozen=True)
class ProfileBin:
    e_lo: float
    e_hi: float
    median_rate: float
    count: int
    L_ref: float | None = None


@dataclass(frozen=True)
class LocalizationProfile:
    fits: tuple
    bins: tuple


def _excluded(E: float, exclusions) -> bool:
    return any(lo <= E <= hi for lo, hi in exclusions)


def localization_profile(
    m: ShiftMeasure,
    f,
    N: int,
    interval,
    samples: int,
    seed: int,
    exclusions=(),
    n_bins: int = 8,
    L_ref=None,
) -> LocalizationProfile:
    """Decay fits for all eigenpairs with energy in the interval.

    Draws ``samples`` windows, diagonalizes the N-site box, fits every
    eigenvector whose eigenvalue lies in the interval and outside the
    excluded neighborhoods, and aggregates median rates per energy bin.
    ``L_ref`` may be a callable E -> L or a LyapunovCurve for the reference
    column.  Eigenpairs whose fit has too few usable sites are skipped.
    """
    lo, hi = (interval.lo, interval.hi) if isinstance(interval, EnergyInterval) else (
        float(interval[0]),
        float(interval[1]),
    )
    if hi <= lo:
        raise ConfigError("empty energy interval")
    ref = _as_reference(L_ref)
    r = f.radius
    fits = []
    for i in range(samples):
        w = sample_window(m, -r, N - 1 + r, seed=derive_seed(seed, i))
        data = eigensystem(build_operator(f, w, (0, N - 1)))
        for k, E in enumerate(data.eigenvalues):
            if not (lo <= E <= hi) or _excluded(E, exclusions):
                continue
            try:
                fits.append(
                    decay_fit(
                        data.eigenvectors[:, k],
                        float(E),
                        L_at_E=None if ref is None else ref(float(E)),
                    )
                )
            except ConfigError:
                continue
    edges = np.linspace(lo, hi, n_bins + 1)
    bins = []
    for b in range(n_bins):
        inside = [
            ft.rate
            for ft in fits
            if edges[b] <= ft.eigenvalue < edges[b + 1]
            or (b == n_bins - 1 and ft.eigenvalue == edges[-1])
        ]
        mid = 0.5 * (edges[b] + edges[b + 1])
        bins.append(
            ProfileBin(
                e_lo=float(edges[b]),
                e_hi=float(edges[b + 1]),
                median_rate=float(np.median(inside)) if inside else math.nan,
                count=len(inside),
                L_ref=None if ref is None else ref(mid),
            )
        )
    return LocalizationProfile(fits=tuple(fits), bins=tuple(bins))


def _as_reference(L_ref):
    if L_ref is None:
        return None
    if isinstance(L_ref, LyapunovCurve):
        xs = np.asarray(L_ref.energies)
        ys = np.asarray(L_ref.estimates)
        return lambda E: float(np.interp(E, xs, ys))
    if callable(L_ref):
        return L_ref
    raise ConfigError("L_ref must be a LyapunovCurve or a callable")


def nbar(N: int) -> int:
    """floor(N^log N) = floor(e^{(ln N)^2}), the far-scale cap."""
    if N < 1:
        raise ConfigError("N must be at least 1")
    if N == 1:
        return 1
    exponent = math.log(N) ** 2
    if exponent > _NBAR_LOG_CAP:
        raise NumericalError(
            f"nbar({N}) = floor(e^{{(ln N)^2}}) has (ln N)^2 = {exponent:.1f} > "
            f"{_NBAR_LOG_CAP}; report it symbolically instead"
        )
    with mpmath.workdps(40):
        return int(mpmath.floor(mpmath.e ** (mpmath.log(N) ** 2)))


@dataclass(frozen=True)
class ResonanceEvent:
    """One double resonance: a near-eigenvalue box and a far deviant stretch."""

    s: int
    K: int
    N1: int
    N2: int
    E: float
    r: int
    m: int
    green_norm: float
    g_m_value: float
    omega_seed: int | None = None


@dataclass(frozen=True)
class ScanCaps:
    """Desk-scale truncation of the double-resonance search ranges.

    box_sizes of None means the powers K, K^2, K^3 clipped at
    min(K^9, box_cap), used for both N1 and N2 symmetrically.
    """

    box_cap: int = 512
    r_floor: int = 64
    r_cap_max: int = 5000
    box_sizes: tuple | None = None
    s_values: tuple = (0,)
    energy_grid: tuple = tuple(np.linspace(-0.5, 0.5, 11))

    def sizes_for(self, K: int) -> tuple:
        cap = min(K**9, self.box_cap)
        if self.box_sizes is not None:
            sizes = tuple(int(n) for n in self.box_sizes if 0 <= n <= cap)
            if not sizes:
                raise ConfigError("no box sizes survive the cap")
            return sizes
        return tuple(sorted({min(K**p, cap) for p in (1, 2, 3)}))

    def r_range(self, K: int) -> range:
        lo = min(K**10, self.r_floor)
        hi = min(K**10, self.r_cap_max)
        if hi < lo:
            raise ConfigError(f"empty r range [{lo}, {hi}] at K = {K}")
        return range(lo, hi + 1)


def double_resonance_scan(
    m: ShiftMeasure,
    f,
    epsilon: float,
    K: int,
    omega: SymbolWindow,
    L_ref,
    caps: ScanCaps | None = None,
    omega_seed: int | None = None,
):
    """All truncated-family double resonances visible in one window.

    For each admissible shift s, box sizes N1, N2, and grid energy E, the
    first condition asks the box [s - N1, s + N2] to have an eigenvalue
    within e^{-K^2} of E; the second asks some offset r and m in {K, 2K}
    for a transfer exponent at most L(E) - epsilon.  Events are emitted in
    deterministic (s, E, r) order with both conditions re-asserted.
    """
    if K < 2:
        raise ConfigError("K must be at least 2")
    if epsilon <= 0:
        raise ConfigError("epsilon must be positive")
    caps = caps or ScanCaps()
    ref = _as_reference(L_ref)
    if ref is None:
        raise ConfigError("a Lyapunov reference is required")
    for s in caps.s_values:
        if math.log(abs(s) + 1) ** 2 > K:
            raise ConfigError(
                f"shift s = {s} violates K >= log^2(|s| + 1) at K = {K}"
            )
    threshold = math.exp(K * K) if K * K < _NBAR_LOG_CAP else math.inf
    sizes = caps.sizes_for(K)
    r_values = caps.r_range(K)
    energies = [float(E) for E in caps.energy_grid]
    radius = f.radius
    need_lo = min(caps.s_values) - max(sizes) - radius
    need_hi = max(caps.s_values) + max(max(r_values) + 2 * K, max(sizes)) + radius
    if not omega.covers(need_lo, need_hi):
        raise ConfigError(
            f"window [{omega.start}, {omega.end}] does not cover "
            f"[{need_lo}, {need_hi}] required by the scan"
        )

    events = []
    r_arr = np.fromiter(r_values, dtype=int)
    for s in sorted(caps.s_values):
        # condition-2 exponents: g_m at every offset, vectorized across r and
        # computed lazily per (m, E) since condition-1 hits gate their use
        base = potential(f, shift(omega, s), max(r_arr) + 2 * K)
        windows = {
            mm: np.stack([base[rv : rv + mm] for rv in r_arr]) for mm in (K, 2 * K)
        }
        g_cache = {}

        def g_values(mm: int, E: float):
            if (mm, E) not in g_cache:
                g_cache[mm, E] = _transfer_log_norm_block(windows[mm], E) / mm
            return g_cache[mm, E]

        for n1 in sizes:
            for n2 in sizes:
                diag = potential(f, shift(omega, s - n1), n1 + n2 + 1)
                if len(diag) == 1:
                    eigs = diag
                else:
                    eigs = eigvalsh_tridiagonal(diag, np.ones(len(diag) - 1))
                for E in energies:
                    dist = float(np.abs(eigs - E).min())
                    green_norm = math.inf if dist == 0.0 else 1.0 / dist
                    if green_norm < threshold:
                        continue
                    cutoff = ref(E) - epsilon
                    if cutoff < 0:
                        continue
                    for mm in (K, 2 * K):
                        gs = g_values(mm, E)
                        for idx in np.nonzero(gs <= cutoff)[0]:
                            g_val = float(gs[idx])
                            assert green_norm >= threshold and g_val <= cutoff
                            events.append(
                                ResonanceEvent(
                                    s=int(s),
                                    K=int(K),
                                    N1=int(n1),
                                    N2=int(n2),
                                    E=E,
                                    r=int(r_arr[idx]),
                                    m=int(mm),
                                    green_norm=green_norm,
                                    g_m_value=g_val,
                                    omega_seed=omega_seed,
                                )
                            )
    events.sort(key=lambda ev: (ev.s, ev.E, ev.r, ev.m, ev.N1, ev.N2))
    return events


@dataclass(frozen=True)
class FrequencyResult:
    """Per-scale event frequencies with Wilson intervals and the raw events."""

    k_values: tuple
    p_hats: tuple
    cis: tuple
    events: tuple


def double_resonance_frequency(
    m: ShiftMeasure,
    f,
    epsilon: float,
    N: int,
    samples: int,
    seed: int,
    caps: ScanCaps | None = None,
    k_values=None,
    L_ref=None,
) -> FrequencyResult:
    """Fraction of sampled windows with at least one event, per scale K.

    The default scales are N, N+2, N+4.  The Lyapunov reference is shared
    across scales; when not supplied it is estimated on the caps energy
    grid.
    """
    caps = caps or ScanCaps()
    if k_values is None:
        k_values = (N, N + 2, N + 4)
    k_values = tuple(int(K) for K in k_values)
    if samples < 1:
        raise ConfigError("samples must be positive")
    if L_ref is None:
        L_ref = lyapunov_curve(
            m,
            f,
            caps.energy_grid,
            n=2000,
            replicas=32,
            seed=derive_seed(seed, 10**6),
        )
    p_hats, cis, all_events = [], [], []
    radius = f.radius
    for j, K in enumerate(k_values):
        sizes = caps.sizes_for(K)
        lo = min(caps.s_values) - max(sizes) - radius
        hi = max(caps.s_values) + max(max(caps.r_range(K)) + 2 * K, max(sizes)) + radius
        hits = 0
        for i in range(samples):
            w_seed = derive_seed(seed, j * samples + i)
            w = sample_window(m, lo, hi, seed=w_seed)
            events = double_resonance_scan(
                m, f, epsilon, K, w, L_ref, caps=caps, omega_seed=int(w_seed)
            )
            if events:
                hits += 1
                all_events.extend(events)
        p_hats.append(hits / samples)
        cis.append(wilson_interval(hits, samples))
    return FrequencyResult(
        k_values=k_values,
        p_hats=tuple(p_hats),
        cis=tuple(cis),
        events=tuple(all_events),
    )


@dataclass(frozen=True)
class GreenDecayCheck:
    lhs: float
    rhs: float
    holds: bool
    worst_j: int
    worst_k: int


def finite_green_decay_check(
    m,
    f,
    omega: SymbolWindow,
    E: float,
    n: int,
    s0: int = 0,
    L_ref: float | None = None,
    eps: float = 0.1,
    C0: float = 5.0,
) -> GreenDecayCheck:
    """|G(j,k)| against exp[(n - |j-k|) L_ref + C0 eps n] / |det(E - H)|.

    Checked for every pair of the n-site box at s0; the determinant is
    common to both sides, so the worst pair maximizes a separable sum and
    the scan is linear in n.  Reports the worst pair's two sides.
    """
    if L_ref is None:
        raise ConfigError("L_ref is required")
    values = potential(f, shift(omega, s0), n)
    d_signs, d_logs, s_signs, s_logs = _prefix_suffix_dets(values, float(E))
    if d_signs[n] == 0:
        raise ConfigError(f"E = {E!r} is an eigenvalue of the box")
    js = np.arange(n)
    left = d_logs[:n] - js * L_ref
    right = s_logs[n - 1 :: -1] + js * L_ref
    left[np.asarray(d_signs[:n]) == 0] = -math.inf
    right[np.asarray(s_signs[n - 1 :: -1]) == 0] = -math.inf
    # worst pair over j <= k: prefix max of the left term against each k
    prefmax = np.maximum.accumulate(left)
    bk = int(np.argmax(prefmax + right))
    bj = int(np.argmax(left[: bk + 1]))
    margin = C0 * eps * n + n * L_ref
    lhs_log = d_logs[bj] + s_logs[n - bk - 1] - d_logs[n]
    rhs_log = (n - (bk - bj)) * L_ref + C0 * eps * n - d_logs[n]
    return GreenDecayCheck(
        lhs=float(math.exp(min(lhs_log, _NBAR_LOG_CAP))),
        rhs=float(math.exp(min(rhs_log, _NBAR_LOG_CAP))),
        holds=bool(left[bj] + right[bk] <= margin + 1e-12 * max(1.0, abs(margin))),
        worst_j=bj,
        worst_k=bk,
    )


def dynamical_probe(data: SpectralData, interval, m_site: int, n_site: int, times) -> float:
    """sup over times of |<delta_n, e^{-itH} P_I delta_m>| from spectral data."""
    lo, hi = (interval.lo, interval.hi) if isinstance(interval, EnergyInterval) else (
        float(interval[0]),
        float(interval[1]),
    )
    sel = (data.eigenvalues >= lo) & (data.eigenvalues <= hi)
    if not sel.any():
        return 0.0
    evals = data.eigenvalues[sel]
    coeffs = data.eigenvectors[n_site, sel] * data.eigenvectors[m_site, sel]
    ts = np.asarray(list(times), dtype=float)
    phases = np.exp(-1j * np.outer(ts, evals))
    return float(np.abs(phases @ coeffs).max())
