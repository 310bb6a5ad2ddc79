"""Command-line front end.

Subcommands: ``match``, ``geodesic``, ``invert``, ``distmat``, ``karcher``.
Runs are configured by a strict-keys JSON document; every run writes a
``report.json`` with the resolved configuration, version, input hashes,
results, and per-stage wall times. Exit codes: 0 success, 1 input or
config error, 2 optimization degraded, 3 internal error.
"""

import argparse
import dataclasses
import hashlib
import json
import logging
import os
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__, energy as energy_mod, features, pipeline
from .energy import MatchConfig
from .errors import ConfigError, ElasticMatchError, MeshValidationError
from .lbfgs import OptimConfig, STATUS_LINE_SEARCH_FAILED
from .mesh import count_inconsistent_edges, load_mesh, save_mesh
from .varifold import KernelConfig

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_INPUT = 1
EXIT_DEGRADED = 2
EXIT_INTERNAL = 3

_OPTIM_DEFAULTS = {
    "memory": 10,
    "max_iters": 500,
    "grad_tol": 1e-8,
    "rel_f_tol": 1e-6,
    "wolfe_c1": 1e-4,
    "wolfe_c2": 0.9,
}

_TOP_DEFAULTS = {
    "sigma": None,            # number | [per level] | null for data-driven
    "lambda": None,           # number | [per level] | null for data-driven
    "levels": 3,              # level count when sigma/lambda are defaulted
    "zonal": "binet",
    "tau_scale": None,
    "srnf_weight": 1.0,
    "srcf_weight": 0.0,
    "init_mode": "decimate_source",
    "template": None,         # mesh path for init_mode "template"
    "subdivide_between_levels": True,
    "coarse_faces": None,
    "optim": None,
    "seed": 0,
    "jobs": 0,                # 0 = all available cores
    "n_samples": 5,
    "iterations": 1,
}


def _check_keys(doc, allowed, context):
    for key in doc:
        if key not in allowed:
            raise ConfigError(f"unknown config key '{key}'"
                              + (f" in {context}" if context else ""))


def load_config(path):
    """Parse and validate the JSON run configuration (strict keys)."""
    if path is None:
        raw = {}
    else:
        try:
            with open(path, "r", encoding="utf-8") as fh:
                raw = json.load(fh)
        except OSError as exc:
            raise ConfigError(f"cannot read config: {exc}")
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config parse error: {exc}")
        if not isinstance(raw, dict):
            raise ConfigError("config must be a JSON object")
    _check_keys(raw, _TOP_DEFAULTS, "")
    conf = dict(_TOP_DEFAULTS)
    conf.update(raw)
    optim_raw = conf["optim"] or {}
    if not isinstance(optim_raw, dict):
        raise ConfigError("'optim' must be a JSON object")
    _check_keys(optim_raw, _OPTIM_DEFAULTS, "'optim'")
    optim = dict(_OPTIM_DEFAULTS)
    optim.update(optim_raw)
    conf["optim"] = optim
    return conf


def _as_level_list(value, n_levels, name):
    if value is None:
        return None
    if isinstance(value, (int, float)) and not isinstance(value, bool):
        return [float(value)] * n_levels
    if isinstance(value, list) and value and \
            all(isinstance(v, (int, float)) for v in value):
        return [float(v) for v in value]
    raise ConfigError(f"'{name}' must be a number or a list of numbers")


def build_run(conf, q0, q1):
    """Resolve schedule and matching weights against the data meshes.

    Returns (schedule, match_config, resolved_config_dict).
    """
    n_levels = conf["levels"]
    sigmas = _as_level_list(conf["sigma"], n_levels, "sigma")
    lams = _as_level_list(conf["lambda"], n_levels, "lambda")
    if sigmas is not None:
        n_levels = len(sigmas)
    if lams is not None:
        if sigmas is not None and len(lams) != n_levels:
            raise ConfigError("'sigma' and 'lambda' lists differ in length")
        n_levels = len(lams)
    if not isinstance(n_levels, int) or n_levels < 1:
        raise ConfigError("'levels' must be a positive integer")

    optim = OptimConfig(**conf["optim"])
    template = None
    if conf["init_mode"] == "template":
        if conf["template"] is None:
            raise ConfigError("init_mode 'template' requires 'template'")
        template = _load_input(conf["template"])
    schedule = pipeline.default_schedule(
        q0, q1, levels=n_levels, optim=optim, init_mode=conf["init_mode"],
        template=template, coarse_faces=conf["coarse_faces"])
    levels = schedule.levels
    if sigmas is not None:
        levels = [dataclasses.replace(lv, sigma=s)
                  for lv, s in zip(levels, sigmas)]
    if lams is not None:
        levels = [dataclasses.replace(lv, lam=l)
                  for lv, l in zip(levels, lams)]
    schedule = dataclasses.replace(
        schedule, levels=levels,
        subdivide_between_levels=bool(conf["subdivide_between_levels"]))

    kernel = KernelConfig(sigma=levels[0].sigma, zonal=conf["zonal"],
                          tau_scale=conf["tau_scale"])
    cfg = MatchConfig(lam=levels[0].lam, kernel=kernel,
                      srnf_weight=conf["srnf_weight"],
                      srcf_weight=conf["srcf_weight"])

    resolved = dict(conf)
    resolved["sigma"] = [lv.sigma for lv in levels]
    resolved["lambda"] = [lv.lam for lv in levels]
    resolved["levels"] = n_levels
    return schedule, cfg, resolved


def _load_input(path):
    mesh = load_mesh(path)
    bad = count_inconsistent_edges(mesh)
    if bad:
        raise MeshValidationError(
            f"{path}: {bad} edge(s) with inconsistent face orientation")
    return mesh


def _sha256(path):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(65536), b""):
            h.update(block)
    return h.hexdigest()


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    return obj


def _write_report(out_dir, payload):
    payload = _jsonable(payload)
    path = Path(out_dir) / "report.json"
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _level_summaries(reports):
    return [
        {
            "sigma": r.sigma,
            "lambda": r.lam,
            "faces": r.faces,
            "iterations": r.optim.iterations,
            "status": r.optim.status,
            "initial_terms": r.initial_terms,
            "final_terms": r.final_terms,
        }
        for r in reports
    ]


def cmd_match(args):
    t0 = time.perf_counter()
    conf = load_config(args.config)
    q0 = _load_input(args.source)
    q1 = _load_input(args.target)
    schedule, cfg, resolved = build_run(conf, q0, q1)
    t_load = time.perf_counter()
    q0t, q1t, reports = pipeline.multires_match(q0, q1, schedule, cfg)
    t_run = time.perf_counter()
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    save_mesh(q0t, out / "matched_source.ply")
    save_mesh(q1t, out / "matched_target.ply")
    t_write = time.perf_counter()
    final_status = reports[-1].optim.status
    _write_report(out, {
        "command": "match",
        "version": __version__,
        "config": resolved,
        "inputs": {
            "source": {"path": str(args.source),
                       "sha256": _sha256(args.source)},
            "target": {"path": str(args.target),
                       "sha256": _sha256(args.target)},
        },
        "results": {"levels": _level_summaries(reports),
                    "final_status": final_status},
        "timings_sec": {"load": t_load - t0, "run": t_run - t_load,
                        "write": t_write - t_run,
                        "total": time.perf_counter() - t0},
    })
    return (EXIT_DEGRADED if final_status == STATUS_LINE_SEARCH_FAILED
            else EXIT_OK)


def cmd_geodesic(args):
    t0 = time.perf_counter()
    conf = load_config(args.config)
    n_samples = args.samples if args.samples is not None \
        else conf["n_samples"]
    if not isinstance(n_samples, int) or n_samples < 2:
        raise ConfigError("'n_samples' must be an integer >= 2")
    q0 = _load_input(args.source)
    q1 = _load_input(args.target)
    schedule, cfg, resolved = build_run(conf, q0, q1)
    resolved["n_samples"] = n_samples
    t_load = time.perf_counter()
    path = pipeline.geodesic(q0, q1, schedule, cfg, n_samples)
    t_run = time.perf_counter()
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    n0 = features.srnf(path.samples[0]).values
    n1 = features.srnf(path.samples[-1]).values
    rows = []
    for i, (t, sample) in enumerate(zip(path.times, path.samples)):
        save_mesh(sample, out / f"geodesic_{i:03d}.ply")
        target = features.SrnfField((1.0 - t) * n0 + t * n1)
        rows.append({
            "index": i,
            "time": float(t),
            "faces": sample.n_faces,
            "inversion_residual": energy_mod.inversion_energy(sample, target),
            "target_norm_sq": target.norm_sq(),
        })
    t_write = time.perf_counter()
    _write_report(out, {
        "command": "geodesic",
        "version": __version__,
        "config": resolved,
        "inputs": {
            "source": {"path": str(args.source),
                       "sha256": _sha256(args.source)},
            "target": {"path": str(args.target),
                       "sha256": _sha256(args.target)},
        },
        "results": {"samples": rows},
        "timings_sec": {"load": t_load - t0, "run": t_run - t_load,
                        "write": t_write - t_run,
                        "total": time.perf_counter() - t0},
    })
    return EXIT_OK


def cmd_invert(args):
    t0 = time.perf_counter()
    conf = load_config(args.config)
    target_mesh = _load_input(args.target)
    init = _load_input(args.init)
    optim = OptimConfig(**conf["optim"])
    t_load = time.perf_counter()
    target = features.srnf(target_mesh)
    result = pipeline.invert_srnf(target, init, optim)
    residual = energy_mod.inversion_energy(result, target)
    t_run = time.perf_counter()
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    save_mesh(result, out / "inverted.ply")
    t_write = time.perf_counter()
    resolved = dict(conf)
    _write_report(out, {
        "command": "invert",
        "version": __version__,
        "config": resolved,
        "inputs": {
            "target": {"path": str(args.target),
                       "sha256": _sha256(args.target)},
            "init": {"path": str(args.init), "sha256": _sha256(args.init)},
        },
        "results": {"inversion_residual": residual,
                    "target_norm_sq": target.norm_sq()},
        "timings_sec": {"load": t_load - t0, "run": t_run - t_load,
                        "write": t_write - t_run,
                        "total": time.perf_counter() - t0},
    })
    return EXIT_OK


def _read_mesh_list(path):
    entries = []
    try:
        with open(path, "r", encoding="utf-8") as fh:
            for line in fh:
                line = line.strip()
                if line and not line.startswith("#"):
                    entries.append(line)
    except OSError as exc:
        raise ConfigError(f"cannot read mesh list: {exc}")
    if not entries:
        raise ConfigError(f"mesh list '{path}' is empty")
    return entries


def cmd_distmat(args):
    t0 = time.perf_counter()
    conf = load_config(args.config)
    paths = _read_mesh_list(args.meshes)
    meshes = [_load_input(p) for p in paths]
    schedule, cfg, resolved = build_run(conf, meshes[0], meshes[-1])
    jobs = args.jobs if args.jobs is not None else conf["jobs"]
    jobs = int(jobs) if jobs else (os.cpu_count() or 1)
    t_load = time.perf_counter()
    mat, failures = pipeline.distance_matrix(meshes, schedule, cfg, jobs=jobs)
    t_run = time.perf_counter()
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "distmat.csv", "w", encoding="ascii") as fh:
        for row in mat:
            fh.write(",".join("%.9g" % v for v in row) + "\n")
    t_write = time.perf_counter()
    _write_report(out, {
        "command": "distmat",
        "version": __version__,
        "config": resolved,
        "inputs": [{"path": p, "sha256": _sha256(p)} for p in paths],
        "results": {
            "matrix": mat,
            "failures": [{"i": i, "j": j, "reason": r}
                         for i, j, r in failures],
        },
        "timings_sec": {"load": t_load - t0, "run": t_run - t_load,
                        "write": t_write - t_run,
                        "total": time.perf_counter() - t0},
    })
    return EXIT_DEGRADED if failures else EXIT_OK


def cmd_karcher(args):
    t0 = time.perf_counter()
    conf = load_config(args.config)
    paths = _read_mesh_list(args.meshes)
    meshes = [_load_input(p) for p in paths]
    template = _load_input(args.template)
    seed = args.seed if args.seed is not None else conf["seed"]
    schedule, cfg, resolved = build_run(conf, template, meshes[0])
    resolved["seed"] = seed
    t_load = time.perf_counter()
    trace = []
    mean = pipeline.karcher_mean(meshes, template, conf["iterations"],
                                 schedule, cfg, seed=seed, trace_out=trace)
    t_run = time.perf_counter()
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    save_mesh(mean, out / "mean.ply")
    t_write = time.perf_counter()
    _write_report(out, {
        "command": "karcher",
        "version": __version__,
        "config": resolved,
        "inputs": {
            "meshes": [{"path": p, "sha256": _sha256(p)} for p in paths],
            "template": {"path": str(args.template),
                         "sha256": _sha256(args.template)},
        },
        "results": {"trace": trace},
        "timings_sec": {"load": t_load - t0, "run": t_run - t_load,
                        "write": t_write - t_run,
                        "total": time.perf_counter() - t0},
    })
    return EXIT_OK


def _add_common(parser):
    parser.add_argument("--config", default=None, help="JSON run config")
    parser.add_argument("--out", default="out", help="output directory")
    parser.add_argument("--seed", type=int, default=None,
                        help="RNG seed (overrides config)")
    parser.add_argument("--jobs", type=int, default=None,
                        help="parallel jobs (overrides config)")
    parser.add_argument("--quiet", action="store_true",
                        help="suppress progress logging")


def build_parser():
    parser = argparse.ArgumentParser(
        prog="elasticmatch",
        description="Elastic surface matching, geodesics, and shape "
                    "statistics for triangle meshes.")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("match", help="match two surfaces")
    p.add_argument("source")
    p.add_argument("target")
    _add_common(p)
    p.set_defaults(func=cmd_match)

    p = sub.add_parser("geodesic", help="geodesic interpolation")
    p.add_argument("source")
    p.add_argument("target")
    p.add_argument("--samples", type=int, default=None,
                   help="number of path samples (overrides config)")
    _add_common(p)
    p.set_defaults(func=cmd_geodesic)

    p = sub.add_parser("invert", help="recover a surface from the "
                                      "feature field of another")
    p.add_argument("target", help="mesh whose feature field is inverted")
    p.add_argument("init", help="initial mesh (same combinatorics)")
    _add_common(p)
    p.set_defaults(func=cmd_invert)

    p = sub.add_parser("distmat", help="pairwise discrepancy matrix")
    p.add_argument("meshes", help="text file with one mesh path per line")
    _add_common(p)
    p.set_defaults(func=cmd_distmat)

    p = sub.add_parser("karcher", help="iterative mean shape")
    p.add_argument("meshes", help="text file with one mesh path per line")
    p.add_argument("template", help="mesh fixing the mean's connectivity")
    _add_common(p)
    p.set_defaults(func=cmd_karcher)
    return parser


def _setup_logging(quiet):
    level_name = os.environ.get("ELASTICMATCH_LOG", "info").lower()
    levels = {"error": logging.ERROR, "info": logging.INFO,
              "debug": logging.DEBUG}
    if level_name not in levels:
        level_name = "info"
    level = logging.ERROR if quiet else levels[level_name]
    logging.basicConfig(level=level, stream=sys.stderr,
                        format="%(levelname)s %(name)s: %(message)s")


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    _setup_logging(getattr(args, "quiet", False))
    try:
        return args.func(args)
    except ElasticMatchError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except Exception as exc:  # internal failure -> exit 3
        logging.getLogger(__name__).exception("internal error")
        print(f"internal error: {exc}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
