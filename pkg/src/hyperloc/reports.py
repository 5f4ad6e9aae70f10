"""Deterministic CSV and SVG artifact writers.

Data files are byte-reproducible for identical inputs: rows come out in a
fixed order, floats are written with repr (shortest round-trip form), line
endings are LF, encoding is UTF-8.  SVG rendering pins matplotlib's hash
salt and drops the creation date, so reruns match byte for byte under the
same matplotlib version.
"""

from __future__ import annotations

import csv
import math

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt

CURVE_HEADER = ("E", "estimate", "std_error", "flagged")
DEVIATION_HEADER = ("E", "epsilon", "n", "p_hat", "ci_lo", "ci_hi")
FIT_HEADER = ("c", "logC", "r_squared")
OPERATOR_HEADER = ("index", "diagonal")
SPECTRUM_HEADER = ("k", "eigenvalue")
GREEN_HEADER = ("j", "k", "value", "log_magnitude")
EVENTS_HEADER = ("omega_seed", "s", "K", "N1", "N2", "E", "r", "m", "green_norm", "g_m_value")
PROFILE_HEADER = ("E_bin", "median_rate", "L_ref", "count")
USTATE_HEADER = ("class_word", "bin_index", "weight")
HOLONOMY_HEADER = ("pair", "radius", "composition_residual", "intertwining_residual", "stabilization_n")

_SVG_SALT = "hyperloc"


def _cell(x) -> str:
    if x is None:
        return ""
    if isinstance(x, bool):
        return "1" if x else "0"
    if isinstance(x, float):
        return repr(x)
    return str(x)


def write_csv(path, header, rows) -> None:
    """One CSV with a mandatory header; cells rendered via _cell."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([_cell(c) for c in row])


def write_curve_csv(path, curve) -> None:
    rows = zip(curve.energies, curve.estimates, curve.std_errors, curve.flagged)
    write_csv(path, CURVE_HEADER, rows)


def write_deviation_csv(path, rows) -> None:
    """Rows are (E, epsilon, n, p_hat, ci_lo, ci_hi) tuples."""
    write_csv(path, DEVIATION_HEADER, rows)


def write_fit_csv(path, reports) -> None:
    """One row per deviation fit; unresolved fits leave the cells empty."""
    write_csv(
        path,
        FIT_HEADER,
        [(r.fitted_c, r.fitted_logC, r.r_squared) for r in reports],
    )


def write_operator_csv(path, op) -> None:
    write_csv(path, OPERATOR_HEADER, enumerate(op.diagonal))


def write_spectrum_csv(path, eigenvalues) -> None:
    write_csv(path, SPECTRUM_HEADER, enumerate(float(e) for e in eigenvalues))


def write_green_csv(path, table) -> None:
    n = table.size
    rows = (
        (j, k, float(table.entries[j, k]), float(table.log_magnitudes[j, k]))
        for j in range(n)
        for k in range(n)
    )
    write_csv(path, GREEN_HEADER, rows)


def write_events_csv(path, events) -> None:
    rows = (
        (e.omega_seed, e.s, e.K, e.N1, e.N2, e.E, e.r, e.m, e.green_norm, e.g_m_value)
        for e in events
    )
    write_csv(path, EVENTS_HEADER, rows)


def write_profile_csv(path, profile) -> None:
    rows = (
        (0.5 * (b.e_lo + b.e_hi), b.median_rate, b.L_ref, b.count)
        for b in profile.bins
    )
    write_csv(path, PROFILE_HEADER, rows)


def write_ustate_csv(path, measure) -> None:
    def rows():
        for word in measure.classes:
            for b, wgt in enumerate(measure.weights[word]):
                yield ".".join(str(s) for s in word), b, float(wgt)

    write_csv(path, USTATE_HEADER, rows())


def write_holonomy_csv(path, rows) -> None:
    """Rows are (pair, radius, composition, intertwining, stabilization_n)."""
    write_csv(path, HOLONOMY_HEADER, rows)


def _finish(fig, path) -> None:
    fig.tight_layout()
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)


def save_curve_chart(path, curve) -> None:
    """L(E) with standard-error bars; flagged points marked separately."""
    with plt.rc_context({"svg.hashsalt": _SVG_SALT}):
        fig, ax = plt.subplots(figsize=(6.4, 4.2))
        ax.errorbar(
            curve.energies,
            curve.estimates,
            yerr=curve.std_errors,
            fmt="o-",
            ms=3,
            lw=1,
            capsize=2,
            label="estimate",
        )
        fl = [(E, v) for E, v, g in zip(curve.energies, curve.estimates, curve.flagged) if g]
        if fl:
            ax.plot(*zip(*fl), "rx", ms=7, label="flagged")
            ax.legend(loc="best")
        ax.set_xlabel("E")
        ax.set_ylabel("finite-scale exponent")
        ax.grid(True, alpha=0.3)
        _finish(fig, path)


def save_deviation_chart(path, n_values, p_hats, label=None) -> None:
    """Deviation probabilities against n on a log scale (zeros dropped)."""
    with plt.rc_context({"svg.hashsalt": _SVG_SALT}):
        fig, ax = plt.subplots(figsize=(6.4, 4.2))
        pts = [(n, p) for n, p in zip(n_values, p_hats) if p > 0]
        if pts:
            ax.semilogy(*zip(*pts), "s-", ms=4, lw=1, label=label)
            if label:
                ax.legend(loc="best")
        else:
            ax.text(0.5, 0.5, "all frequencies zero", ha="center", va="center",
                    transform=ax.transAxes)
        ax.set_xlabel("n")
        ax.set_ylabel("deviation frequency")
        ax.grid(True, alpha=0.3, which="both")
        _finish(fig, path)


def save_profile_chart(path, profile) -> None:
    """Median decay rate per energy bin with the Lyapunov reference."""
    with plt.rc_context({"svg.hashsalt": _SVG_SALT}):
        fig, ax = plt.subplots(figsize=(6.4, 4.2))
        mids = [0.5 * (b.e_lo + b.e_hi) for b in profile.bins]
        med = [b.median_rate for b in profile.bins]
        ax.plot(mids, med, "o-", ms=4, lw=1, label="median decay rate")
        refs = [(x, b.L_ref) for x, b in zip(mids, profile.bins) if b.L_ref is not None]
        if refs:
            ax.plot(*zip(*refs), "--", lw=1, label="Lyapunov reference")
        ax.legend(loc="best")
        ax.set_xlabel("E")
        ax.set_ylabel("decay rate")
        ax.grid(True, alpha=0.3)
        _finish(fig, path)
