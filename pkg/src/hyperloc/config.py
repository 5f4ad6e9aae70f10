"""Strict JSON experiment configuration.

A config is one JSON document; unknown keys are rejected so an archived
experiment can always be replayed against the schema it was written for.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

from .errors import ConfigError
from .measures import ShiftMeasure
from .sampling import LocallyConstantFn, TorusSystem
from .symbolic import NOT_MIXING, fixed_points, mixing_constant

EXPERIMENT_KINDS = (
    "lyapunov",
    "ldt",
    "ustate",
    "spectrum",
    "green",
    "localize",
    "double-resonance",
    "holonomy",
)

_TOP_KEYS = {
    "kind",
    "system",
    "sampling",
    "energies",
    "n",
    "replicas",
    "epsilon",
    "eta",
    "seed",
    "output_dir",
}
_SYSTEM_TYPES = ("bernoulli", "markov", "doubling", "cat")

_SYSTEM_KEYS = {
    "bernoulli": {"type", "probs"},
    "markov": {"type", "P"},
    "doubling": {"type", "observable"},
    "cat": {"type", "observable"},
}
_SAMPLING_KEYS = {
    "site_values": {"type", "values"},
    "constant": {"type", "value", "radius"},
    "table": {"type", "radius", "entries"},
}

#: Observables for the torus systems, keyed by config name.  Doubling-map
#: observables take one coordinate, automorphism observables take a pair.
OBSERVABLES = {
    "doubling": {
        "cos_angle": lambda x: math.cos(2.0 * math.pi * x),
        "sin_angle": lambda x: math.sin(2.0 * math.pi * x),
        "centered": lambda x: x - 0.5,
    },
    "cat": {
        "cos_sum": lambda p: math.cos(2.0 * math.pi * (p[0] + p[1])),
        "first_centered": lambda p: p[0] - 0.5,
    },
}


@dataclass(frozen=True)
class ExperimentConfig:
    kind: str
    system: dict
    sampling: dict | None
    energies: tuple
    n: int
    replicas: int
    epsilon: float | None
    eta: float
    seed: int
    output_dir: str


def _require(doc: dict, key: str):
    if key not in doc:
        raise ConfigError(f"config is missing required field '{key}'")
    return doc[key]


def parse_config(doc) -> ExperimentConfig:
    """Validate one decoded JSON document into an ExperimentConfig."""
    if not isinstance(doc, dict):
        raise ConfigError("config document must be a JSON object")
    unknown = sorted(set(doc) - _TOP_KEYS)
    if unknown:
        raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
    seed = _require(doc, "seed")
    if not isinstance(seed, int) or isinstance(seed, bool) or seed < 0:
        raise ConfigError(f"seed must be a nonnegative integer, got {seed!r}")
    kind = _require(doc, "kind")
    if kind not in EXPERIMENT_KINDS:
        raise ConfigError(
            f"kind must be one of {', '.join(EXPERIMENT_KINDS)}; got {kind!r}"
        )
    system = _require(doc, "system")
    if not isinstance(system, dict) or "type" not in system:
        raise ConfigError("system must be an object with a 'type' field")
    stype = system["type"]
    if stype not in _SYSTEM_TYPES:
        raise ConfigError(
            f"system type must be one of {', '.join(_SYSTEM_TYPES)}; got {stype!r}"
        )
    bad = sorted(set(system) - _SYSTEM_KEYS[stype])
    if bad:
        raise ConfigError(f"unknown system keys for {stype}: {', '.join(bad)}")

    sampling = doc.get("sampling")
    if stype in ("bernoulli", "markov"):
        if not isinstance(sampling, dict) or "type" not in sampling:
            raise ConfigError("sampling must be an object with a 'type' field")
        if sampling["type"] not in _SAMPLING_KEYS:
            raise ConfigError(
                "sampling type must be one of "
                f"{', '.join(sorted(_SAMPLING_KEYS))}; got {sampling['type']!r}"
            )
        bad = sorted(set(sampling) - _SAMPLING_KEYS[sampling["type"]])
        if bad:
            raise ConfigError(
                f"unknown sampling keys for {sampling['type']}: {', '.join(bad)}"
            )
    elif sampling is not None:
        raise ConfigError("torus systems take no sampling block; use system.observable")

    energies = _require(doc, "energies")
    if not isinstance(energies, list) or not energies:
        raise ConfigError("energies must be a nonempty array of numbers")
    try:
        energies = tuple(float(E) for E in energies)
    except (TypeError, ValueError):
        raise ConfigError("energies must be a nonempty array of numbers") from None
    if kind == "green" and len(energies) != 1:
        raise ConfigError(
            f"the green experiment probes a single energy; energies has {len(energies)}"
        )

    n = _require(doc, "n")
    if not isinstance(n, int) or isinstance(n, bool) or n < 1:
        raise ConfigError(f"n must be a positive integer, got {n!r}")
    replicas = _require(doc, "replicas")
    if not isinstance(replicas, int) or isinstance(replicas, bool) or replicas < 1:
        raise ConfigError(f"replicas must be a positive integer, got {replicas!r}")

    epsilon = doc.get("epsilon")
    if kind in ("ldt", "double-resonance"):
        if epsilon is None:
            raise ConfigError(f"epsilon is required for the {kind} experiment")
    if epsilon is not None:
        epsilon = float(epsilon)
        if not epsilon > 0:
            raise ConfigError(f"epsilon must be positive, got {epsilon!r}")

    eta = float(doc.get("eta", 0.1))
    if eta <= 0:
        raise ConfigError(f"eta must be positive, got {eta!r}")

    output_dir = doc.get("output_dir", "hyperloc-out")
    if not isinstance(output_dir, str) or not output_dir:
        raise ConfigError("output_dir must be a nonempty string")

    return ExperimentConfig(
        kind=kind,
        system=system,
        sampling=sampling,
        energies=energies,
        n=n,
        replicas=replicas,
        epsilon=epsilon,
        eta=eta,
        seed=seed,
        output_dir=output_dir,
    )


def load_config(path) -> ExperimentConfig:
    try:
        with open(path, encoding="utf-8") as fh:
            doc = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path} is not valid JSON: {exc}") from exc
    return parse_config(doc)


def _parse_word(key: str) -> tuple:
    try:
        return tuple(int(tok) for tok in key.split("."))
    except ValueError:
        raise ConfigError(
            f"table keys are dot-joined symbols like '1.2.1'; got {key!r}"
        ) from None


def build_system(cfg: ExperimentConfig):
    """(base system, sampling function) from a validated config.

    Shift systems return (ShiftMeasure, LocallyConstantFn); torus systems
    return (TorusSystem, None) since the observable is part of the system.
    """
    stype = cfg.system["type"]
    if stype == "bernoulli":
        probs = cfg.system.get("probs")
        if probs is None:
            raise ConfigError("bernoulli system needs 'probs'")
        m = ShiftMeasure.bernoulli(tuple(float(p) for p in probs))
    elif stype == "markov":
        P = cfg.system.get("P")
        if P is None:
            raise ConfigError("markov system needs a row-stochastic matrix 'P'")
        m = ShiftMeasure.markov([[float(x) for x in row] for row in P])
    else:
        name = cfg.system.get("observable")
        table = OBSERVABLES[stype]
        if name not in table:
            raise ConfigError(
                f"unknown {stype} observable {name!r}; choose from "
                f"{', '.join(sorted(table))}"
            )
        return TorusSystem(stype, table[name], name=name), None

    s = cfg.sampling
    if s["type"] == "site_values":
        f = LocallyConstantFn.from_site_values(
            m.spec, tuple(float(v) for v in s["values"])
        )
    elif s["type"] == "constant":
        f = LocallyConstantFn.constant(m.spec, float(s["value"]), radius=int(s["radius"]))
    else:
        radius = int(s["radius"])
        entries = {
            _parse_word(key): float(v) for key, v in s["entries"].items()
        }
        f = LocallyConstantFn(m.spec, radius, entries)
    return m, f


def validate_config(cfg: ExperimentConfig) -> list:
    """Static diagnostics; hypothesis violations are warnings, not errors.

    The uniform large-deviation estimates assume a mixing subshift with a
    fixed point and a nonconstant sampling function; configs outside those
    hypotheses still run, but the asymptotic guarantees do not apply.
    """
    notes = []
    try:
        system, f = build_system(cfg)
    except ValueError as exc:
        # construction failures (bad probabilities, inconsistent tables)
        # surface as error notes rather than crashing the validator
        return [f"error: {exc}"]
    if isinstance(system, TorusSystem):
        return notes
    spec = system.spec
    if not fixed_points(spec):
        notes.append(
            "warning: the subshift has no fixed point; uniform large-deviation "
            "estimates assume one"
        )
    if mixing_constant(spec) is NOT_MIXING:
        notes.append("warning: the transition matrix is not mixing")
    values = set(f.table.values())
    if len(values) <= 1:
        notes.append(
            "warning: the sampling function is constant; deviation "
            "probabilities and exponent fluctuations degenerate to zero"
        )
    return notes
