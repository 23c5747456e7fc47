"""TOML experiment configuration.

A configuration file has top-level keys ``experiment``, ``seed``,
``output_dir`` and ``alpha_list`` plus the sections below; every key is
optional and falls back to the desk-scale defaults of its experiment.

``[model]``       kind, sigma, lambda, nonneg
``[mask]``        type (radial | uniform), lines, fraction, seed
``[psf]``         builtin (gaussian | airy-like) or path, size, width
``[data]``        observation_path, truth_path, size, n_sources, snr_db
``[solver]``      max_iters, tol, rho
``[knockout]``    target (three_spots | densest_window), alpha, window, dilate
``[sweep]``       family (intensity | shift), roi, lo, hi, tol, alpha
``[chain]``       enabled, iterations, burn_in, thin, seed, step_delta (number
                  or "auto"), moreau_lambda (number, "step" to follow the
                  adapted step, or "initial_step"), target_acceptance
``[asymptotics]`` q, lambda, alphas, nmax
"""

from __future__ import annotations

import copy
import os
import sys
from dataclasses import dataclass, field

if sys.version_info >= (3, 11):
    import tomllib
else:  # pragma: no cover
    import tomli as tomllib

from .errors import InvalidInputError

EXPERIMENTS = ("mri", "deconv", "asymptotics")

DEFAULTS = {
    "mri": {
        "model": {"kind": "tv_tomography", "sigma": 3e-4, "lambda": 100.0, "nonneg": False},
        "mask": {"type": "radial", "lines": 10, "seed": None},
        "data": {"size": 64},
        "solver": {"max_iters": 20000, "tol": 1e-6, "rho": 1.0},
        "knockout": {"target": "three_spots", "alpha": 0.01, "dilate": 1},
        "sweep": {"family": "intensity", "alpha": 0.01, "tol": 1e-3},
        "chain": {"enabled": True, "iterations": 200_000, "burn_in": 20_000, "thin": 1,
                  "target_acceptance": 0.5},
    },
    "deconv": {
        "model": {"kind": "l1_deconvolution", "sigma": None, "lambda": 300.0, "nonneg": False},
        "psf": {"builtin": "gaussian", "size": 16, "width": 2.0},
        "data": {"size": 128, "n_sources": 100, "snr_db": 20.0},
        "solver": {"max_iters": 20000, "tol": 1e-6, "rho": 1.0},
        "knockout": {"target": "densest_window", "alpha": 0.01, "window": 8},
        "sweep": {"family": "shift", "alpha": 0.01, "lo": -10.0, "hi": 10.0, "tol": 1e-2},
        "chain": {"enabled": True, "iterations": 200_000, "burn_in": 20_000, "thin": 1,
                  "target_acceptance": 0.5, "moreau_lambda": "initial_step"},
    },
    "asymptotics": {
        "asymptotics": {"q": 1.0, "lambda": 1.0, "alphas": [0.2, 0.1, 0.05], "nmax": 10_000},
    },
}


@dataclass
class ExperimentConfig:
    experiment: str = "mri"
    seed: int = 0
    output_dir: str = "out"
    alpha_list: list = field(default_factory=lambda: [0.01, 0.05, 0.1, 0.2])
    sections: dict = field(default_factory=dict)
    base_dir: str = "."

    def section(self, name):
        return self.sections.get(name, {})

    def get(self, section, key, default=None):
        value = self.section(section).get(key)
        return default if value is None else value

    def path(self, value):
        """Resolve a path relative to the configuration file."""
        if value is None:
            return None
        return value if os.path.isabs(value) else os.path.join(self.base_dir, value)

    def snapshot(self):
        return {"experiment": self.experiment, "seed": self.seed, "output_dir": self.output_dir,
                "alpha_list": list(self.alpha_list), **copy.deepcopy(self.sections)}


def _merge(base, extra):
    out = copy.deepcopy(base)
    for key, value in extra.items():
        if isinstance(value, dict) and isinstance(out.get(key), dict):
            out[key] = _merge(out[key], value)
        else:
            out[key] = value
    return out


def config_from_dict(raw, base_dir="."):
    raw = dict(raw)
    experiment = str(raw.pop("experiment", "mri")).lower()
    if experiment not in EXPERIMENTS:
        raise InvalidInputError(f"experiment must be one of {EXPERIMENTS}, got {experiment!r}")
    seed = int(raw.pop("seed", 0))
    output_dir = str(raw.pop("output_dir", "out"))
    alphas = [float(a) for a in raw.pop("alpha_list", [0.01, 0.05, 0.1, 0.2])]
    if not alphas or any(not 0.0 < a < 1.0 for a in alphas):
        raise InvalidInputError("alpha_list entries must lie in (0, 1)")
    for key, value in raw.items():
        if not isinstance(value, dict):
            raise InvalidInputError(f"unknown top-level key {key!r}")
    sections = _merge(DEFAULTS[experiment], raw)
    cfg = ExperimentConfig(experiment, seed, output_dir, alphas, sections, base_dir)
    for key in ("observation_path", "truth_path"):
        p = cfg.path(cfg.section("data").get(key))
        if p is not None and not os.path.exists(p):
            raise InvalidInputError(f"[data] {key} {p!r} does not exist")
    p = cfg.path(cfg.section("psf").get("path"))
    if p is not None and not os.path.exists(p):
        raise InvalidInputError(f"[psf] path {p!r} does not exist")
    return cfg


def load_config(path):
    """Read a TOML file into an :class:`ExperimentConfig`."""
    try:
        with open(path, "rb") as fh:
            raw = tomllib.load(fh)
    except FileNotFoundError:
        raise InvalidInputError(f"config file {path!r} not found") from None
    except tomllib.TOMLDecodeError as exc:
        raise InvalidInputError(f"invalid TOML in {path!r}: {exc}") from None
    return config_from_dict(raw, os.path.dirname(os.path.abspath(path)))
