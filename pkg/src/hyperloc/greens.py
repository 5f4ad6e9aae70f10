"""Finite-volume operators, determinant recursions, and Green functions.

The truncation of the Schrodinger operator to a box is a symmetric
tridiagonal matrix with unit off-diagonals.  Determinants of (E - H) obey
the three-term recursion that also generates the transfer matrices, which
yields Green entries by Cramer's rule and the transfer-matrix bound on
their size.  Determinants are carried as (sign, log magnitude) so boxes in
the thousands do not overflow.

The literal Cramer quotient of determinants disagrees in sign with direct
inversion (check it on [[0,1],[1,0]] at E = 0); entries here carry the
corrected sign, verified against dense inversion.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.linalg import eigh_tridiagonal, eigvalsh_tridiagonal

from .cocycle import ScaledMatrix, schrodinger_step
from .errors import AtEigenvalueError, ConfigError, NumericalError
from .sampling import potential
from .symbolic import SymbolWindow, shift

_LOG_HUGE = 690.0


@dataclass(frozen=True)
class TridiagonalOperator:
    """Restriction of the operator to a box, as its diagonal.

    Off-diagonals are implicitly all ones.  ``window_origin`` records which
    omega-coordinate sits at matrix index 0.
    """

    diagonal: tuple
    window_origin: int = 0

    def __post_init__(self):
        if len(self.diagonal) < 1:
            raise ConfigError("a box operator needs at least one site")
        object.__setattr__(
            self, "diagonal", tuple(float(v) for v in self.diagonal)
        )

    @property
    def size(self) -> int:
        return len(self.diagonal)

    def matrix(self) -> np.ndarray:
        n = self.size
        m = np.diag(np.asarray(self.diagonal))
        idx = np.arange(n - 1)
        m[idx, idx + 1] = 1.0
        m[idx + 1, idx] = 1.0
        return m

    def norm_bound(self) -> float:
        """Row-sum bound max |v| + 2."""
        return max(abs(v) for v in self.diagonal) + 2.0


def build_operator(f, omega: SymbolWindow, lam) -> TridiagonalOperator:
    """Truncation to the box lam = [a, b] in omega-coordinates."""
    a, b = int(lam[0]), int(lam[1])
    if b < a:
        raise ConfigError(f"box [{a}, {b}] is empty")
    values = potential(f, shift(omega, a), b - a + 1)
    return TridiagonalOperator(diagonal=tuple(values), window_origin=a)


@dataclass(frozen=True)
class SpectralData:
    """Verified eigensystem: ascending eigenvalues, orthonormal columns."""

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray
    residual: float
    orthogonality_defect: float


def eigensystem(H: TridiagonalOperator, tol: float = 1e-9) -> SpectralData:
    """All eigenpairs of the box operator, checked against the contract.

    Any tridiagonal method would do; what is enforced is the residual
    ||H psi - E psi||_inf <= tol (||H|| + 1) and pairwise orthogonality
    within tol.
    """
    n = H.size
    diag = np.asarray(H.diagonal)
    if n == 1:
        return SpectralData(diag.copy(), np.ones((1, 1)), 0.0, 0.0)
    off = np.ones(n - 1)
    vals, vecs = eigh_tridiagonal(diag, off)
    resid = np.abs(H.matrix() @ vecs - vecs * vals[None, :]).max()
    gram = vecs.T @ vecs - np.eye(n)
    orth = float(np.abs(gram).max())
    scale = H.norm_bound() + 1.0
    if resid > tol * scale or orth > tol:
        raise NumericalError(
            f"eigensystem residual {resid:.3e} (cap {tol * scale:.3e}) or "
            f"orthogonality defect {orth:.3e} (cap {tol:.3e}) out of contract"
        )
    return SpectralData(vals, vecs, float(resid), orth)


@dataclass(frozen=True)
class SignedLog:
    """A real number as sign and log magnitude; sign 0 means exactly zero."""

    sign: int
    log_abs: float

    def __post_init__(self):
        if self.sign not in (-1, 0, 1):
            raise ValueError("sign must be -1, 0, or 1")

    @property
    def value(self) -> float:
        if self.sign == 0:
            return 0.0
        if self.log_abs > _LOG_HUGE:
            return self.sign * math.inf
        return self.sign * math.exp(self.log_abs)

    @staticmethod
    def of(x: float) -> "SignedLog":
        if x == 0.0:
            return SignedLog(0, -math.inf)
        return SignedLog(1 if x > 0 else -1, math.log(abs(x)))


def _det_recursion(values: np.ndarray, E: float):
    """Scaled three-term recursion for D_k = det(E - H) over prefixes.

    Returns arrays (signs, log magnitudes) for k = 0..N.  Consecutive D
    cannot both vanish (that would propagate back to D_0 = 1), so rescaling
    by the larger magnitude is always possible.
    """
    n = len(values)
    signs = np.empty(n + 1, dtype=int)
    logs = np.empty(n + 1)
    prev, cur = 0.0, 1.0
    scale = 0.0
    signs[0], logs[0] = 1, 0.0
    for k in range(1, n + 1):
        prev, cur = cur, (E - values[k - 1]) * cur - prev
        m = max(abs(prev), abs(cur))
        if m == 0.0:
            raise NumericalError("determinant recursion lost all magnitude")
        prev /= m
        cur /= m
        scale += math.log(m)
        if cur == 0.0:
            signs[k], logs[k] = 0, -math.inf
        else:
            signs[k] = 1 if cur > 0 else -1
            logs[k] = scale + math.log(abs(cur))
    return signs, logs


def char_det(f, omega: SymbolWindow, E: float, N: int) -> SignedLog:
    """det(E - H_{omega,N}) in scaled form; N = 0 is 1 by convention.

    By the transfer identity this equals the (1,1) entry of the N-step
    cocycle product, which the tests cross-check.
    """
    if N < 0:
        raise ConfigError("N must be nonnegative")
    if N == 0:
        return SignedLog(1, 0.0)
    values = potential(f, omega, N)
    signs, logs = _det_recursion(values, float(E))
    return SignedLog(int(signs[N]), float(logs[N]))


def _prefix_suffix_dets(values: np.ndarray, E: float):
    """Prefix dets D_j and suffix dets S_m (over the last m sites)."""
    d_signs, d_logs = _det_recursion(values, E)
    s_signs, s_logs = _det_recursion(values[::-1], E)
    return d_signs, d_logs, s_signs, s_logs


def green_entry_cramer(f, omega: SymbolWindow, E: float, N: int, j: int, k: int) -> SignedLog:
    """G(j,k) of the N-site box by the determinant quotient.

    Magnitude |D_j| |S_{N-k-1}| / |D_N| with the sign corrected to match
    direct inversion: in det(E - H) terms the entry is minus the quotient.
    """
    if not (0 <= j < N and 0 <= k < N):
        raise ConfigError(f"indices ({j}, {k}) outside the {N}-site box")
    if j > k:
        j, k = k, j
    values = potential(f, omega, N)
    d_signs, d_logs, s_signs, s_logs = _prefix_suffix_dets(values, float(E))
    num_sign = int(d_signs[j] * s_signs[N - k - 1])
    num_log = float(d_logs[j] + s_logs[N - k - 1])
    den_sign = int(d_signs[N])
    den_log = float(d_logs[N])
    if den_sign == 0 or (num_log - den_log) > _LOG_HUGE:
        raise AtEigenvalueError(
            f"E = {E!r} is numerically an eigenvalue of the {N}-site box"
        )
    if num_sign == 0:
        return SignedLog(0, -math.inf)
    return SignedLog(-num_sign * den_sign, num_log - den_log)


@dataclass(frozen=True)
class GreenTable:
    """All entries of (H - E)^{-1} on a box.

    ``distance_to_spectrum`` is the condition diagnostic; None when the
    producing route did not compute a spectrum.
    """

    energy: float
    entries: np.ndarray
    log_magnitudes: np.ndarray
    distance_to_spectrum: float | None
    window_origin: int = 0

    def __post_init__(self):
        n = self.entries.shape[0]
        if self.entries.shape != (n, n) or self.log_magnitudes.shape != (n, n):
            raise ConfigError("Green table must be square")
        defect = float(np.abs(self.entries - self.entries.T).max()) if n else 0.0
        scale = max(1.0, float(np.abs(self.entries).max())) if n else 1.0
        if defect > 1e-9 * scale:
            raise NumericalError(
                f"Green table symmetry defect {defect:.3e} exceeds 1e-9 relative"
            )

    @property
    def size(self) -> int:
        return self.entries.shape[0]

    def entry(self, j: int, k: int) -> float:
        return float(self.entries[j, k])


def green_table(f, omega: SymbolWindow, E: float, N: int, tol: float = 1e-9) -> GreenTable:
    """Green table through the spectral decomposition of the box."""
    H = build_operator(f, omega, (0, N - 1))
    data = eigensystem(H, tol=tol)
    gaps = np.abs(data.eigenvalues - E)
    dist = float(gaps.min())
    # An exact-zero test misses energies that land within rounding of an
    # eigenvalue (the free chain at E = 0 computes a gap of a few ulp, and
    # the "inverse" then comes out near 1/eps).  Guard relatively instead.
    scale = max(1.0, abs(float(E)), float(np.abs(data.eigenvalues).max()))
    if dist <= 1e-12 * scale:
        raise AtEigenvalueError(
            f"E = {E!r} is numerically an eigenvalue of the {N}-site box"
        )
    coeffs = 1.0 / (data.eigenvalues - E)
    entries = (data.eigenvectors * coeffs[None, :]) @ data.eigenvectors.T
    entries = 0.5 * (entries + entries.T)
    with np.errstate(divide="ignore"):
        log_mags = np.log(np.abs(entries))
    return GreenTable(
        energy=float(E),
        entries=entries,
        log_magnitudes=log_mags,
        distance_to_spectrum=dist,
        window_origin=0,
    )


def green_table_cramer(f, omega: SymbolWindow, E: float, N: int) -> GreenTable:
    """Green table from the determinant quotients alone.

    Entries are assembled from prefix and suffix determinant arrays in
    O(N^2); the spectrum enters only as the condition diagnostic.
    """
    values = potential(f, omega, N)
    d_signs, d_logs, s_signs, s_logs = _prefix_suffix_dets(values, float(E))
    if d_signs[N] == 0:
        raise AtEigenvalueError(f"E = {E!r} is an eigenvalue of the {N}-site box")
    entries = np.empty((N, N))
    log_mags = np.empty((N, N))
    for j in range(N):
        for k in range(j, N):
            num_sign = d_signs[j] * s_signs[N - k - 1]
            lg = d_logs[j] + s_logs[N - k - 1] - d_logs[N]
            if lg > _LOG_HUGE:
                raise AtEigenvalueError(
                    f"E = {E!r} is numerically an eigenvalue of the {N}-site box"
                )
            sign = -num_sign * d_signs[N]
            val = 0.0 if num_sign == 0 else sign * math.exp(min(lg, _LOG_HUGE))
            entries[j, k] = entries[k, j] = val
            log_mags[j, k] = log_mags[k, j] = lg
    if N == 1:
        dist = abs(values[0] - E)
    else:
        dist = float(np.abs(eigvalsh_tridiagonal(values, np.ones(N - 1)) - E).min())
    return GreenTable(
        energy=float(E),
        entries=entries,
        log_magnitudes=log_mags,
        distance_to_spectrum=dist,
        window_origin=0,
    )


def _prefix_log_norms(values: np.ndarray, E: float) -> np.ndarray:
    """log ||A_j|| for j = 0..N over a value sequence.

    Same renormalized kernel as the cocycle module: after dividing by the
    operator norm each step, the accumulated log is exactly log ||A_j||.
    """
    n = len(values)
    out = np.empty(n + 1)
    out[0] = 0.0
    a, b, c, d = 1.0, 0.0, 0.0, 1.0
    sigma = 0.0
    for k in range(n):
        x = E - values[k]
        a, b, c, d = x * a - c, x * b - d, a, b
        s = math.hypot(0.5 * (a + d), 0.5 * (c - b)) + math.hypot(
            0.5 * (a - d), 0.5 * (c + b)
        )
        a /= s
        b /= s
        c /= s
        d /= s
        sigma += math.log(s)
        out[k + 1] = sigma
    return out


def _suffix_log_norms(values: np.ndarray, E: float) -> np.ndarray:
    """log ||A_{N-k}(T^k .)|| for k = 0..N: products growing leftward."""
    n = len(values)
    out = np.empty(n + 1)
    out[n] = 0.0
    prod = ScaledMatrix.identity()
    for k in range(n - 1, -1, -1):
        prod = prod @ ScaledMatrix.from_matrix(schrodinger_step(E, values[k]))
        out[k] = prod.log_norm
    return out


def green_bound_check(f, omega: SymbolWindow, E: float, N: int) -> float:
    """Worst relative slack of the transfer-matrix bound on Green entries.

    For each j <= k the bound reads |G(j,k)| <= ||A_j|| ||A_{N-k}(T^k)|| /
    |det(E - H)|; since the determinant is common to both sides the slack
    1 - |G| / bound decomposes over j and k and the minimum is exact.
    Nonnegative up to 1e-12 certifies the bound on this instance.
    """
    values = potential(f, omega, N)
    d_signs, d_logs, s_signs, s_logs = _prefix_suffix_dets(values, float(E))
    pre = _prefix_log_norms(values, float(E))
    suf = _suffix_log_norms(values, float(E))
    worst_j = max(
        (d_logs[j] - pre[j]) if d_signs[j] != 0 else -math.inf for j in range(N)
    )
    worst_k = max(
        (s_logs[N - k - 1] - suf[k]) if s_signs[N - k - 1] != 0 else -math.inf
        for k in range(N)
    )
    return float(1.0 - math.exp(worst_j + worst_k))


def resolvent_norm(H: TridiagonalOperator, E: float, tol: float = 1e-9) -> float:
    """1 / dist(E, spectrum); infinity when E is an eigenvalue exactly."""
    data = eigensystem(H, tol=tol)
    dist = float(np.abs(data.eigenvalues - E).min())
    if dist == 0.0:
        return math.inf
    return 1.0 / dist
