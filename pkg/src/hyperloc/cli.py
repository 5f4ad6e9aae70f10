"""Batch experiment runner.

``hyperloc <experiment> --config cfg.json [--output dir] [--seed n]`` loads a
strict JSON config, runs the experiment, and writes the module-declared CSV
files, SVG charts where they exist, and a manifest echoing the config and
library versions.  Exit codes: 0 success, 2 malformed config, 3 numerical
failure.  All data files are byte-deterministic for a fixed config; the
manifest records wall time and is excluded from that guarantee.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import os
import sys
import time

import numpy as np

from . import __version__
from .config import EXPERIMENT_KINDS, ExperimentConfig, build_system, load_config, validate_config
from .cocycle import op_norm_2x2, schrodinger_step, stable_holonomy, unstable_holonomy
from .errors import (
    AtEigenvalueError,
    ConfigError,
    DegenerateError,
    NotConvergedError,
    NumericalError,
)
from .greens import build_operator, eigensystem, green_table
from .localize import double_resonance_frequency, localization_profile
from .lyapunov import (
    deviation_probability,
    estimate_lyapunov,
    exceptional_energies,
    ldt_rate_fit,
    lyapunov_curve,
)
from .measures import ShiftMeasure, sample_window
from .sampling import TorusSystem
from .seeding import derive_seed
from .symbolic import shift, wedge
from . import reports
from .ustate import approximate_u_state

_NUMERICAL_ERRORS = (NotConvergedError, DegenerateError, NumericalError, AtEigenvalueError)


def _apply_thread_cap() -> None:
    cap = os.environ.get("HYPERLOC_THREADS")
    if not cap:
        return
    try:
        k = max(1, int(cap))
    except ValueError:
        raise ConfigError(f"HYPERLOC_THREADS must be an integer, got {cap!r}") from None
    for var in (
        "OMP_NUM_THREADS",
        "OPENBLAS_NUM_THREADS",
        "MKL_NUM_THREADS",
        "NUMEXPR_NUM_THREADS",
    ):
        os.environ.setdefault(var, str(k))
    try:
        from threadpoolctl import threadpool_limits

        threadpool_limits(limits=k)
    except ImportError:
        pass


def _shift_system(cfg: ExperimentConfig):
    m, f = build_system(cfg)
    if isinstance(m, TorusSystem):
        raise ConfigError(
            f"the {cfg.kind} experiment requires a subshift system (field 'system')"
        )
    return m, f


def _run_lyapunov(cfg, outdir):
    m, f = build_system(cfg)
    curve = lyapunov_curve(m, f, cfg.energies, n=cfg.n, replicas=cfg.replicas, seed=cfg.seed)
    csv_path = os.path.join(outdir, "curve.csv")
    svg_path = os.path.join(outdir, "curve.svg")
    reports.write_curve_csv(csv_path, curve)
    reports.save_curve_chart(svg_path, curve)
    extras = {
        "flagged_energies": list(curve.flagged_energies()),
        "exceptional_intervals": [list(iv) for iv in exceptional_energies(curve, cfg.eta)],
    }
    return [csv_path, svg_path], extras


def _run_ldt(cfg, outdir):
    m, f = build_system(cfg)
    ladder = tuple(cfg.n * k for k in (1, 2, 4, 8))
    rows = []
    fits = []
    for idx, E in enumerate(cfg.energies):
        L_ref, _ = estimate_lyapunov(
            m, f, E, n=8 * cfg.n, replicas=cfg.replicas, seed=derive_seed(cfg.seed, 16 * idx)
        )
        p_hats, halves = [], []
        for jdx, n in enumerate(ladder):
            p, (lo, hi) = deviation_probability(
                m, f, E, n, cfg.epsilon, L_ref, cfg.replicas,
                derive_seed(cfg.seed, 16 * idx + 1 + jdx),
            )
            rows.append((E, cfg.epsilon, n, p, lo, hi))
            p_hats.append(p)
            halves.append(0.5 * (hi - lo))
        fits.append(
            ldt_rate_fit(E, cfg.epsilon, ladder, tuple(p_hats), cfg.replicas,
                         ci_half_widths=tuple(halves))
        )
    dev_path = os.path.join(outdir, "deviation.csv")
    fit_path = os.path.join(outdir, "fit.csv")
    svg_path = os.path.join(outdir, "deviation.svg")
    reports.write_deviation_csv(dev_path, rows)
    reports.write_fit_csv(fit_path, fits)
    reports.save_deviation_chart(
        svg_path, ladder, [r[3] for r in rows[: len(ladder)]],
        label=f"E = {cfg.energies[0]}",
    )
    extras = {
        "n_ladder": list(ladder),
        "below_resolution": [bool(r.below_resolution) for r in fits],
    }
    return [dev_path, fit_path, svg_path], extras


def _run_ustate(cfg, outdir):
    m, f = _shift_system(cfg)
    mu = approximate_u_state(m, f, cfg.energies[0], iters=cfg.n)
    path = os.path.join(outdir, "ustate.csv")
    reports.write_ustate_csv(path, mu)
    extras = {
        "residual": mu.residual,
        "classes": len(mu.classes),
        "grid_size": mu.grid_size,
        "depth": mu.depth,
    }
    return [path], extras


def _sampled_box(cfg, m, f):
    r = f.radius
    return sample_window(m, -r, cfg.n - 1 + r, seed=derive_seed(cfg.seed, 0))


def _run_spectrum(cfg, outdir):
    m, f = _shift_system(cfg)
    op = build_operator(f, _sampled_box(cfg, m, f), (0, cfg.n - 1))
    data = eigensystem(op)
    op_path = os.path.join(outdir, "operator.csv")
    sp_path = os.path.join(outdir, "spectrum.csv")
    reports.write_operator_csv(op_path, op)
    reports.write_spectrum_csv(sp_path, data.eigenvalues)
    extras = {"norm_bound": op.norm_bound(), "residual": data.residual}
    return [op_path, sp_path], extras


def _run_green(cfg, outdir):
    m, f = _shift_system(cfg)
    table = green_table(f, _sampled_box(cfg, m, f), cfg.energies[0], cfg.n)
    path = os.path.join(outdir, "green.csv")
    reports.write_green_csv(path, table)
    extras = {"distance_to_spectrum": table.distance_to_spectrum}
    return [path], extras


def _run_localize(cfg, outdir):
    m, f = _shift_system(cfg)
    curve = lyapunov_curve(
        m, f, cfg.energies, n=cfg.n, replicas=cfg.replicas, seed=derive_seed(cfg.seed, 0)
    )
    exclusions = exceptional_energies(curve, cfg.eta)
    profile = localization_profile(
        m,
        f,
        N=cfg.n,
        interval=(min(cfg.energies), max(cfg.energies)),
        samples=cfg.replicas,
        seed=derive_seed(cfg.seed, 1),
        exclusions=exclusions,
        L_ref=curve,
    )
    csv_path = os.path.join(outdir, "profile.csv")
    svg_path = os.path.join(outdir, "profile.svg")
    reports.write_profile_csv(csv_path, profile)
    reports.save_profile_chart(svg_path, profile)
    extras = {
        "fits": len(profile.fits),
        "excluded_intervals": [list(iv) for iv in exclusions],
    }
    return [csv_path, svg_path], extras


def _run_double_resonance(cfg, outdir):
    m, f = _shift_system(cfg)
    result = double_resonance_frequency(
        m, f, cfg.epsilon, N=2, samples=cfg.replicas, seed=cfg.seed, k_values=(2, 3, 4)
    )
    path = os.path.join(outdir, "events.csv")
    reports.write_events_csv(path, result.events)
    extras = {
        "k_values": list(result.k_values),
        "p_hats": list(result.p_hats),
        "cis": [list(ci) for ci in result.cis],
        "events": len(result.events),
    }
    return [path], extras


def _matching_window(m, lo, hi, anchor, seed):
    """A window agreeing with the anchor at coordinate 0, by rejection."""
    for t in range(64):
        w = sample_window(m, lo, hi, seed=derive_seed(seed, t))
        if w[0] == anchor:
            return w
    raise NumericalError("no window matching the anchor symbol in 64 draws")


def _run_holonomy(cfg, outdir):
    m, f = _shift_system(cfg)
    E = cfg.energies[0]
    pad = 2 * f.radius + 6
    rows = []
    for i in range(cfg.replicas):
        w = sample_window(m, -pad, pad, seed=derive_seed(cfg.seed, 3 * i))
        alt = _matching_window(m, -pad, pad, w[0], derive_seed(cfg.seed, 3 * i + 1))
        alt2 = _matching_window(m, -pad, pad, w[0], derive_seed(cfg.seed, 3 * i + 2))

        ws, ws3 = wedge(alt, w), wedge(alt2, w)
        h12 = stable_holonomy(f, w, ws, E)
        h13 = stable_holonomy(f, w, ws3, E)
        h23 = stable_holonomy(f, ws, ws3, E)
        comp = op_norm_2x2(h23.matrix @ h12.matrix - h13.matrix)
        a_w = schrodinger_step(E, f.evaluate(w))
        a_ws = schrodinger_step(E, f.evaluate(ws))
        h12_T = stable_holonomy(f, shift(w, 1), shift(ws, 1), E)
        inter = op_norm_2x2(a_ws @ h12.matrix - h12_T.matrix @ a_w)
        rows.append((f"stable-{i}", f.radius, comp, inter, h12.depth))

        wu, wu3 = wedge(w, alt), wedge(w, alt2)
        g12 = unstable_holonomy(f, w, wu, E)
        g13 = unstable_holonomy(f, w, wu3, E)
        g23 = unstable_holonomy(f, wu, wu3, E)
        comp_u = op_norm_2x2(g23.matrix @ g12.matrix - g13.matrix)
        rows.append((f"unstable-{i}", f.radius, comp_u, None, g12.depth))
    path = os.path.join(outdir, "holonomy.csv")
    reports.write_holonomy_csv(path, rows)
    worst = max(max(r[2] for r in rows), max(r[3] for r in rows if r[3] is not None))
    return [path], {"worst_residual": worst, "pairs": cfg.replicas}


_RUNNERS = {
    "lyapunov": _run_lyapunov,
    "ldt": _run_ldt,
    "ustate": _run_ustate,
    "spectrum": _run_spectrum,
    "green": _run_green,
    "localize": _run_localize,
    "double-resonance": _run_double_resonance,
    "holonomy": _run_holonomy,
}


def _write_manifest(outdir, cfg, files, extras, wall_time):
    import matplotlib
    import scipy

    manifest = {
        "kind": cfg.kind,
        "config": dataclasses.asdict(cfg),
        "versions": {
            "python": sys.version.split()[0],
            "hyperloc": __version__,
            "numpy": np.__version__,
            "scipy": scipy.__version__,
            "matplotlib": matplotlib.__version__,
        },
        "wall_time_s": round(wall_time, 3),
        "files": [os.path.basename(p) for p in files],
        "extras": extras,
    }
    path = os.path.join(outdir, "manifest.json")
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return path


def _run(cfg: ExperimentConfig) -> int:
    outdir = cfg.output_dir
    os.makedirs(outdir, exist_ok=True)
    t0 = time.perf_counter()
    files, extras = _RUNNERS[cfg.kind](cfg, outdir)
    wall = time.perf_counter() - t0
    manifest = _write_manifest(outdir, cfg, files, extras, wall)
    for p in files + [manifest]:
        print(p)
    return 0


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="hyperloc",
        description="Transfer-matrix cocycle experiments over subshifts of finite type",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for kind in EXPERIMENT_KINDS + ("validate",):
        p = sub.add_parser(kind)
        p.add_argument("--config", required=True, help="path to a JSON experiment config")
        p.add_argument("--output", help="override the config's output_dir")
        p.add_argument("--seed", type=int, help="override the config's seed")
    args = parser.parse_args(argv)

    try:
        _apply_thread_cap()
        cfg = load_config(args.config)
        if args.seed is not None:
            cfg = dataclasses.replace(cfg, seed=args.seed)
        if args.output:
            cfg = dataclasses.replace(cfg, output_dir=args.output)
        if args.command == "validate":
            for note in validate_config(cfg):
                print(note)
            return 0
        if cfg.kind != args.command:
            raise ConfigError(
                f"config field 'kind' is {cfg.kind!r} but the "
                f"{args.command} experiment was requested"
            )
        return _run(cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except ValueError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except _NUMERICAL_ERRORS as exc:
        print(f"numerical failure ({type(exc).__name__}): {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
