"""Command-line interface: ``uq <subcommand> ...``.

Exit codes: 0 success, 2 invalid input, 3 convergence failure, 4 numeric or
internal failure.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

from . import __version__
from . import data as datagen
from .admm import solve_map
from .analytic import error_curve, log_grid, write_curve_csv
from .config import load_config
from .errors import ConvergenceError, InvalidInputError, UQError
from .experiment import (
    admm_config,
    chain_config,
    model_template,
    prepare_model,
    run_experiment,
    run_sweeps,
    write_gamma_csv,
    write_json,
)
from .io import read_image, save_observation, write_image
from .model import potential
from .pxmala import estimate_gamma, relative_error, run_chain
from .region import _roi_mask, build_region, knockout_test

EXIT_OK, EXIT_INPUT, EXIT_CONVERGENCE, EXIT_NUMERIC = 0, 2, 3, 4


def _floats(text):
    try:
        return [float(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise InvalidInputError(f"expected a comma-separated list of numbers, got {text!r}") from None


def _print(obj):
    print(json.dumps(obj, indent=2, sort_keys=True))


def _map_for(cfg, model, report_path=None, map_path=None):
    """``(x_map, g_at_map)`` from saved files when given, else by solving.

    With only a report, ``x_map`` is ``None``.
    """
    if map_path:
        x = read_image(map_path)
        return x, potential(model, x)
    if report_path:
        with open(report_path) as fh:
            saved = json.load(fh)
        try:
            return None, float(saved["g_at_map"])
        except (KeyError, TypeError, ValueError):
            raise InvalidInputError("map report needs a numeric 'g_at_map'") from None
    report = solve_map(model, admm_config(cfg))
    return report.x_map, report.g_at_map.total


def cmd_phantom(args):
    img = datagen.make_phantom(args.size)
    write_image(args.out, img)
    _print({"out": args.out, "size": args.size})


def cmd_scene(args):
    img = datagen.make_sparse_scene(args.size, args.sources, args.seed)
    write_image(args.out, img)
    _print({"out": args.out, "size": args.size, "sources": args.sources, "seed": args.seed})


def cmd_simulate(args):
    cfg = load_config(args.config)
    truth = read_image(args.truth)
    tmpl = model_template(cfg, truth.shape, truth)
    seed = cfg.seed if args.seed is None else args.seed
    obs, info = datagen.simulate_observation(truth, tmpl, seed=seed)
    save_observation(args.out, obs)
    _print({"out": args.out, **info})


def cmd_map(args):
    cfg = load_config(args.config)
    model, _, _ = prepare_model(cfg)
    report = solve_map(model, admm_config(cfg))
    scalars = report.scalars()
    if args.out:
        write_json(args.out, scalars)
    if args.save_map:
        write_image(args.save_map, report.x_map)
    _print(scalars)


def cmd_region(args):
    with open(args.map_report) as fh:
        rep = json.load(fh)
    try:
        n, g = int(rep["n"]), float(rep["g_at_map"])
    except (KeyError, TypeError, ValueError):
        raise InvalidInputError("map report needs numeric 'n' and 'g_at_map'") from None
    out = [build_region(a, n, g, warn=False).as_dict() for a in _floats(args.alpha)]
    _print(out[0] if len(out) == 1 else out)


def cmd_test(args):
    cfg = load_config(args.config)
    model, _, _ = prepare_model(cfg)
    _, g_map = _map_for(cfg, model, args.map_report, args.map)
    surrogate = read_image(args.surrogate)
    outcome = knockout_test(build_region(args.alpha, model.n, g_map, warn=False), model, surrogate)
    _print(outcome.as_dict())


def cmd_sweep(args):
    cfg = load_config(args.config)
    sec = cfg.sections.setdefault("sweep", {})
    sec["family"] = args.family
    sec["alpha"] = args.alpha
    for key in ("lo", "hi", "tol"):
        if getattr(args, key) is not None:
            sec[key] = getattr(args, key)
    model, _, _ = prepare_model(cfg)
    x_map, g_map = _map_for(cfg, model, None, args.map)
    roi = [int(v) for v in _floats(args.roi)]
    if len(roi) != 4:
        raise InvalidInputError("--roi expects x,y,w,h")
    mask = _roi_mask(x_map.shape, roi)
    results = run_sweeps(cfg, model, x_map, build_region(args.alpha, model.n, g_map, warn=False), mask)
    _print([r.as_dict() for r in results] if len(results) > 1 else results[0].as_dict())


def cmd_sample(args):
    cfg = load_config(args.config)
    sec = cfg.sections.setdefault("chain", {})
    for key, value in (("iterations", args.iters), ("burn_in", args.burn), ("thin", args.thin),
                       ("seed", args.seed)):
        if value is not None:
            sec[key] = value
    model, _, _ = prepare_model(cfg)
    report = solve_map(model, admm_config(cfg))
    out = run_chain(model, chain_config(cfg, model), x_map=report.x_map)
    alphas = _floats(args.alpha_list) if args.alpha_list else cfg.alpha_list
    rows = []
    for a in alphas:
        region = build_region(a, model.n, report.g_at_map.total, warn=False)
        est = estimate_gamma(out, a)
        rows.append((a, est.gamma_hat, est.mc_std_error, region.gamma_tilde, relative_error(region, est)))
    os.makedirs(args.out_dir, exist_ok=True)
    summary = out.summary()
    write_json(os.path.join(args.out_dir, "chain_summary.json"), summary)
    write_gamma_csv(os.path.join(args.out_dir, "gamma.csv"), rows)
    _print(summary)


def cmd_asymptotics(args):
    pts = error_curve(args.q, args.lam, _floats(args.alphas), log_grid(args.nmax))
    write_curve_csv(pts, args.out)
    _print({"out": args.out, "points": len(pts)})


def cmd_run(args):
    cfg = load_config(args.config)
    manifest = run_experiment(cfg, args.out_dir)
    _print({"output_dir": args.out_dir or cfg.path(cfg.output_dir), "stages": manifest.stages,
            "files": sorted(manifest.files)})


def build_parser():
    p = argparse.ArgumentParser(prog="uq", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("phantom", help="render the Shepp-Logan phantom")
    s.add_argument("--size", type=int, default=64)
    s.add_argument("--out", required=True, help=".grd or .pgm")
    s.set_defaults(func=cmd_phantom)

    s = sub.add_parser("scene", help="random sparse point scene")
    s.add_argument("--size", type=int, default=128)
    s.add_argument("--sources", type=int, default=100)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_scene)

    s = sub.add_parser("simulate", help="noisy observation of a truth image")
    s.add_argument("--config", required=True)
    s.add_argument("--truth", required=True)
    s.add_argument("--seed", type=int)
    s.add_argument("--out", required=True, help=".npy (required for Fourier data) or image")
    s.set_defaults(func=cmd_simulate)

    s = sub.add_parser("map", help="MAP estimate by ADMM")
    s.add_argument("--config", required=True)
    s.add_argument("--out", help="report JSON")
    s.add_argument("--save-map", help="write x_map (.grd or .pgm)")
    s.set_defaults(func=cmd_map)

    s = sub.add_parser("region", help="credible-region threshold from a MAP report")
    s.add_argument("--alpha", required=True, help="one value or a comma-separated list")
    s.add_argument("--map-report", required=True)
    s.set_defaults(func=cmd_region)

    s = sub.add_parser("test", help="knockout test of a surrogate image")
    s.add_argument("--config", required=True)
    s.add_argument("--surrogate", required=True)
    s.add_argument("--alpha", type=float, default=0.01)
    s.add_argument("--map-report", help="take g(x_MAP) from this report")
    s.add_argument("--map", help="take x_MAP from this image instead of solving")
    s.set_defaults(func=cmd_test)

    s = sub.add_parser("sweep", help="intensity or position sweep of a region of interest")
    s.add_argument("--config", required=True)
    s.add_argument("--family", choices=("intensity", "shift"), required=True)
    s.add_argument("--roi", required=True, help="x,y,w,h in pixels")
    s.add_argument("--alpha", type=float, default=0.01)
    s.add_argument("--lo", type=float)
    s.add_argument("--hi", type=float)
    s.add_argument("--tol", type=float)
    s.add_argument("--map", help="take x_MAP from this image instead of solving")
    s.set_defaults(func=cmd_sweep)

    s = sub.add_parser("sample", help="px-MALA chain and empirical thresholds")
    s.add_argument("--config", required=True)
    s.add_argument("--iters", type=int)
    s.add_argument("--burn", type=int)
    s.add_argument("--thin", type=int)
    s.add_argument("--seed", type=int)
    s.add_argument("--alpha-list")
    s.add_argument("--out-dir", default=".")
    s.set_defaults(func=cmd_sample)

    s = sub.add_parser("asymptotics", help="error curves for the generalised-Gaussian family")
    s.add_argument("--q", type=float, default=1.0)
    s.add_argument("--lambda", dest="lam", type=float, default=1.0)
    s.add_argument("--alphas", default="0.2,0.1,0.05")
    s.add_argument("--nmax", type=int, default=10_000)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_asymptotics)

    s = sub.add_parser("run", help="full experiment from a TOML file")
    s.add_argument("--config", required=True)
    s.add_argument("--out-dir")
    s.set_defaults(func=cmd_run)
    return p


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        args.func(args)
    except InvalidInputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except (FileNotFoundError, IsADirectoryError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except ConvergenceError as exc:
        print(f"convergence failure: {exc}", file=sys.stderr)
        return EXIT_CONVERGENCE
    except (UQError, FloatingPointError, ArithmeticError) as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    return EXIT_OK


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
