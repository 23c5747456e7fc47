"""End-to-end runs: data -> MAP -> regions -> tests/sweeps -> optional MCMC.

Every stage writes plot-ready CSV/JSON into ``output_dir``; the manifest lists
each file with its SHA-256 and keeps all timings, so the other outputs are
byte-identical across reruns with the same configuration.
"""

from __future__ import annotations

import csv
import hashlib
import json
import os
import time
from dataclasses import dataclass, field

import numpy as np

from . import __version__
from . import data as datagen
from .admm import AdmmConfig, solve_map
from .analytic import error_curve, log_grid, write_curve_csv
from .config import ExperimentConfig
from .errors import ConvergenceError, InvalidInputError
from .io import load_observation, read_image, save_observation, write_grd
from .model import Kind, l1_deconvolution, tv_tomography
from .operators import (
    PointSpreadFunction,
    airy_like_psf,
    gaussian_psf,
    radial_mask,
    radial_mask_for_fraction,
    uniform_mask,
)
from .pxmala import ChainConfig, estimate_gamma, relative_error, run_chain, suggest_step
from .region import (
    build_region,
    densest_window,
    fill_region,
    intensity_family,
    knockout_test,
    scalar_sweep,
    shift_family,
    _roi_mask,
)

# offsets keep the scene, the noise and the chain on separate random streams
_NOISE_STREAM = 1
_CHAIN_STREAM = 2


@dataclass
class RunManifest:
    config: dict
    version: str
    stages: list = field(default_factory=list)
    wall_times: dict = field(default_factory=dict)
    files: dict = field(default_factory=dict)
    failed_stage: str | None = None
    error: str | None = None

    def as_dict(self):
        return {"config": self.config, "version": self.version, "stages": self.stages,
                "wall_times": self.wall_times, "files": self.files,
                "failed_stage": self.failed_stage, "error": self.error}


def sha256_file(path):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 20), b""):
            h.update(block)
    return h.hexdigest()


def write_json(path, obj):
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True, default=_json_default)
        fh.write("\n")


def _json_default(obj):
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    raise TypeError(f"cannot serialise {type(obj).__name__}")


# model construction


def make_psf(cfg: ExperimentConfig):
    sec = cfg.section("psf")
    if sec.get("path"):
        return PointSpreadFunction(read_image(cfg.path(sec["path"])))
    name = str(sec.get("builtin", "gaussian")).lower().replace("_", "-")
    size = int(sec.get("size", 16))
    width = float(sec.get("width", 2.0))
    if name == "gaussian":
        return gaussian_psf(size, width)
    if name in ("airy-like", "airy"):
        return airy_like_psf(size, width)
    raise InvalidInputError(f"unknown builtin PSF {name!r}")


def make_mask(cfg: ExperimentConfig, shape):
    sec = cfg.section("mask")
    kind = str(sec.get("type", "radial")).lower()
    seed = sec.get("seed")
    if kind == "radial":
        if sec.get("lines") is None and sec.get("fraction") is not None:
            return radial_mask_for_fraction(shape, float(sec["fraction"]), seed=seed)
        return radial_mask(shape, int(sec.get("lines", 10)), seed=seed)
    if kind == "uniform":
        return uniform_mask(shape, float(sec.get("fraction", 0.15)), seed=0 if seed is None else seed)
    raise InvalidInputError(f"unknown mask type {kind!r}")


def make_truth(cfg: ExperimentConfig):
    data = cfg.section("data")
    if data.get("truth_path"):
        return read_image(cfg.path(data["truth_path"]))
    size = int(data.get("size", 64))
    if cfg.experiment == "mri":
        return datagen.make_phantom(size)
    return datagen.make_sparse_scene(size, int(data.get("n_sources", 100)), seed=cfg.seed)


def model_template(cfg: ExperimentConfig, shape, truth=None):
    """Model with a zero observation; ``sigma`` may be derived from the SNR."""
    m = cfg.section("model")
    lam = float(m.get("lambda", 1.0))
    nonneg = bool(m.get("nonneg", False))
    if cfg.experiment == "mri":
        mask = make_mask(cfg, shape)
        sigma = float(m.get("sigma") or 3e-4)
        return tv_tomography(np.zeros(shape, complex), mask, sigma, lam, nonneg)
    if cfg.experiment == "deconv":
        psf = make_psf(cfg)
        tmpl = l1_deconvolution(None, psf, 1.0, lam, nonneg, shape=shape)
        sigma = m.get("sigma")
        if sigma is None:
            if truth is None:
                raise InvalidInputError("sigma is required when no ground truth is available")
            sigma = datagen.sigma_for_snr(tmpl.forward.forward(truth), float(cfg.get("data", "snr_db", 20.0)))
        return tmpl.replace(sigma=float(sigma))
    raise InvalidInputError(f"experiment {cfg.experiment!r} has no imaging model")


def prepare_model(cfg: ExperimentConfig, sigma_scale=1.0):
    """Build ``(model, truth, info)`` from a configuration.

    The observation is read from ``[data] observation_path`` when given,
    otherwise simulated from the truth with noise level ``sigma * sigma_scale``.
    """
    data = cfg.section("data")
    truth = None
    if data.get("truth_path") or not data.get("observation_path"):
        truth = make_truth(cfg)
    if data.get("observation_path"):
        obs = load_observation(cfg.path(data["observation_path"]))
        tmpl = model_template(cfg, obs.shape, truth)
        tmpl = tmpl.replace(sigma=tmpl.sigma * sigma_scale)
        if tmpl.kind is Kind.TV_TOMOGRAPHY and not np.iscomplexobj(obs):
            raise InvalidInputError("tomography observations must be complex (.npy)")
        return datagen.with_observation(tmpl, obs), truth, {"sigma": tmpl.sigma, "source": "file"}
    tmpl = model_template(cfg, truth.shape, truth)
    tmpl = tmpl.replace(sigma=tmpl.sigma * sigma_scale)
    obs, info = datagen.simulate_observation(truth, tmpl, seed=cfg.seed + _NOISE_STREAM)
    info["source"] = "simulated"
    return datagen.with_observation(tmpl, obs), truth, info


def admm_config(cfg: ExperimentConfig):
    s = cfg.section("solver")
    tol = float(s.get("tol", 1e-6))
    return AdmmConfig(rho=float(s.get("rho", 1.0)), max_iters=int(s.get("max_iters", 20000)),
                      tol_primal=tol, tol_dual=tol)


def chain_config(cfg: ExperimentConfig, model):
    c = cfg.section("chain")
    delta = c.get("step_delta")
    delta = suggest_step(model) if delta in (None, "auto") else float(delta)
    ml = c.get("moreau_lambda")
    if ml == "initial_step":
        ml = delta
    elif ml in (None, "step"):
        ml = None
    else:
        ml = float(ml)
    target = c.get("target_acceptance", 0.5)
    return ChainConfig(step_delta=delta, iterations=int(c.get("iterations", 200_000)),
                       burn_in=int(c.get("burn_in", 20_000)), thin=int(c.get("thin", 1)),
                       seed=int(c.get("seed", cfg.seed + _CHAIN_STREAM)), moreau_lambda=ml,
                       target_acceptance=None if target in (False, "none") else float(target))


# surrogates


def knockout_mask(cfg: ExperimentConfig, x_map):
    """Pixels removed by the knockout, and a short description."""
    k = cfg.section("knockout")
    target = str(k.get("target", "three_spots"))
    if "roi" in k:
        return _roi_mask(x_map.shape, k["roi"]), f"roi {list(k['roi'])}"
    if target == "three_spots":
        if x_map.shape[0] != x_map.shape[1]:
            raise InvalidInputError("the three-spot target needs a square phantom")
        mask = datagen.phantom_feature_mask(x_map.shape[0], dilate=int(k.get("dilate", 1)))
        return mask, "three_spots"
    if target == "densest_window":
        roi = densest_window(x_map, int(k.get("window", 8)))
        return _roi_mask(x_map.shape, roi), f"roi {list(roi)}"
    raise InvalidInputError(f"unknown knockout target {target!r}")


def knockout_surrogate(cfg: ExperimentConfig, x_map):
    mask, label = knockout_mask(cfg, x_map)
    value = cfg.section("knockout").get("fill")
    return fill_region(x_map, mask, None if value is None else float(value)), mask, label


def run_sweeps(cfg: ExperimentConfig, model, x_map, region, mask):
    s = cfg.section("sweep")
    family = str(s.get("family", "intensity"))
    tol = float(s.get("tol", 1e-3))
    if "roi" in s:
        mask = _roi_mask(x_map.shape, s["roi"])
    results = []
    if family == "intensity":
        theta0 = float(np.mean(x_map[mask]))
        lo = float(s.get("lo", theta0 - 1.0))
        hi = float(s.get("hi", theta0 + 1.0))
        results.append(scalar_sweep(region, model, intensity_family(x_map, mask), lo, hi,
                                    theta0=theta0, tol=tol, name="intensity"))
    elif family == "shift":
        lo, hi = float(s.get("lo", -10.0)), float(s.get("hi", 10.0))
        for axis, name in ((0, "shift_rows"), (1, "shift_cols")):
            results.append(scalar_sweep(region, model, shift_family(x_map, mask, axis), lo, hi,
                                        theta0=0.0, tol=tol, name=name))
    else:
        raise InvalidInputError(f"unknown sweep family {family!r}")
    return results


# orchestration


class _Stages:
    def __init__(self, manifest, out_dir):
        self.manifest = manifest
        self.out_dir = out_dir

    def file(self, name):
        return os.path.join(self.out_dir, name)

    def record(self, name):
        self.manifest.files[name] = sha256_file(self.file(name))

    def run(self, name, fn):
        t0 = time.perf_counter()
        try:
            result = fn()
        except Exception as exc:
            self.manifest.failed_stage = name
            self.manifest.error = f"{type(exc).__name__}: {exc}"
            raise
        finally:
            self.manifest.wall_times[name] = time.perf_counter() - t0
        self.manifest.stages.append(name)
        return result


def _write_regions(path, regions):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["alpha", "n", "g_at_map", "tau_alpha", "gamma_tilde", "alpha_valid", "tau_in_range"])
        for r in regions:
            w.writerow([repr(r.alpha), r.n, repr(r.g_at_map), repr(r.tau_alpha), repr(r.gamma_tilde),
                        int(r.alpha_valid), int(r.tau_in_range)])


def write_gamma_csv(path, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["alpha", "gamma_hat", "mc_std_error", "gamma_tilde", "relative_error"])
        for row in rows:
            w.writerow([repr(v) for v in row])


def run_experiment(cfg: ExperimentConfig, out_dir=None):
    """Run every configured stage and return the :class:`RunManifest`.

    The manifest is written to ``manifest.json`` even when a stage fails;
    the failing stage's exception is re-raised afterwards.
    """
    out_dir = out_dir or cfg.path(cfg.output_dir)
    os.makedirs(out_dir, exist_ok=True)
    manifest = RunManifest(cfg.snapshot(), __version__)
    st = _Stages(manifest, out_dir)
    try:
        if cfg.experiment == "asymptotics":
            _run_asymptotics(cfg, st)
        else:
            _run_imaging(cfg, st)
    finally:
        write_json(st.file("manifest.json"), manifest.as_dict())
    return manifest


def _run_asymptotics(cfg, st):
    a = cfg.section("asymptotics")

    def curve():
        pts = error_curve(float(a.get("q", 1.0)), float(a.get("lambda", 1.0)),
                          [float(v) for v in a.get("alphas", [0.2, 0.1, 0.05])],
                          log_grid(int(a.get("nmax", 10_000))))
        write_curve_csv(pts, st.file("curve.csv"))
        st.record("curve.csv")
        return pts

    return st.run("asymptotics", curve)


def _run_imaging(cfg, st):
    model, truth, info = st.run("data", lambda: prepare_model(cfg))

    def save_data():
        if truth is not None:
            write_grd(st.file("truth.grd"), truth)
            st.record("truth.grd")
        save_observation(st.file("observation.npy"), model.observation)
        st.record("observation.npy")
        write_json(st.file("data.json"), info)
        st.record("data.json")

    st.run("save_data", save_data)

    def solve():
        try:
            return solve_map(model, admm_config(cfg))
        except ConvergenceError as exc:
            raise ConvergenceError(str(exc), exc.last_iterate, exc.residual, exc.report) from None

    report = st.run("map", solve)
    st.manifest.wall_times["map_solver"] = report.wall_time_seconds
    scalars = {k: v for k, v in report.scalars().items() if k != "wall_time_seconds"}
    write_json(st.file("map_report.json"), scalars)
    st.record("map_report.json")
    write_grd(st.file("map.grd"), report.x_map)
    st.record("map.grd")
    g_map = report.g_at_map.total

    regions = st.run("regions", lambda: [build_region(a, model.n, g_map, warn=False)
                                         for a in cfg.alpha_list])
    _write_regions(st.file("regions.csv"), regions)
    st.record("regions.csv")

    def knockout():
        sur, mask, label = knockout_surrogate(cfg, report.x_map)
        alpha = float(cfg.get("knockout", "alpha", 0.01))
        out = knockout_test(build_region(alpha, model.n, g_map, warn=False), model, sur)
        write_grd(st.file("surrogate.grd"), sur)
        st.record("surrogate.grd")
        write_json(st.file("knockout.json"), {**out.as_dict(), "target": label})
        st.record("knockout.json")
        return out, mask

    outcome, mask = st.run("knockout", knockout)

    if cfg.section("sweep").get("enabled", True):
        def sweep():
            alpha = float(cfg.get("sweep", "alpha", 0.01))
            res = run_sweeps(cfg, model, report.x_map, build_region(alpha, model.n, g_map, warn=False),
                             mask)
            write_json(st.file("sweep.json"), [r.as_dict() for r in res])
            st.record("sweep.json")
            return res

        st.run("sweep", sweep)

    if cfg.section("chain").get("enabled", True):
        def chain():
            ccfg = chain_config(cfg, model)
            out = run_chain(model, ccfg, x_map=report.x_map)
            st.manifest.wall_times["chain_sampler"] = out.wall_time_seconds
            summary = out.summary()
            summary["iterations"] = ccfg.iterations
            summary["burn_in"] = ccfg.burn_in
            summary["thin"] = ccfg.thin
            write_json(st.file("chain_summary.json"), summary)
            st.record("chain_summary.json")
            np.save(st.file("g_samples.npy"), out.g_samples)
            st.record("g_samples.npy")
            rows = []
            for r in regions:
                est = estimate_gamma(out, r.alpha)
                rows.append((r.alpha, est.gamma_hat, est.mc_std_error, r.gamma_tilde,
                             relative_error(r, est)))
            write_gamma_csv(st.file("gamma.csv"), rows)
            st.record("gamma.csv")
            return out

        st.run("chain", chain)

