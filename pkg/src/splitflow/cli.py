"""Command-line pipeline: generate, train, analyze, report.

A run lives in one output directory. ``generate`` writes the prior
particles and the target (cloud plus discrete atoms), ``train`` fits
the coefficient network and stores a checkpoint, ``analyze`` integrates
the ensemble and emits trajectory, indicator, snapshot, and report
files, and ``report`` renders a markdown summary of the analysis.

Configuration is one JSON document; every value has a default and the
command-line flags --out, --seed, and --threads override the file. All
output files carry the hash of the resolved configuration (execution
details like the output path and thread count are excluded from the
hash) so artifacts can be matched to the exact settings that produced
them.

Exit codes: 0 success, 2 usage or domain errors, 3 numerical
divergence, 4 I/O failures.
"""

from __future__ import annotations

import argparse
import copy
import hashlib
import json
import os
import sys
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from . import pathnet
from .datasets import (
    ParticleCloud,
    cloud_to_target,
    make_checkerboard,
    make_gaussian_mixture,
    make_s_curve,
    make_two_moons,
    read_cloud_csv,
    read_target_csv,
    sample_prior,
    two_atom_target,
    write_cloud_csv,
    write_target_csv,
)
from .dynamics import EnsembleResult, TimeGrid, integrate_ensemble
from .errors import (
    BlowUpError,
    DomainError,
    InsufficientSamplesError,
    SingularTimeError,
    SplitflowError,
    TrainingDivergenceError,
)
from .field import flow_evaluator
from .indicator import SplitReport, build_indicator, detect_t_star
from .schedule import default_schedule

DATASET_PARAM_DEFAULTS = {
    "two_moons": {"n_samples": 2000, "noise": 0.05},
    "checkerboard": {"n_samples": 2000, "cells_per_side": 4, "extent": 2.0},
    "s_curve": {"n_samples": 2000, "noise": 0.1},
    "gaussian_mixture": {"n_samples": 2000, "k": 8, "radius": 2.0,
                         "comp_std": 0.1},
    "two_atoms": {"separation": 1.0},
}

DEFAULT_CONFIG = {
    "dataset": "two_moons",
    "dataset_params": {},
    "n_particles": 3000,
    "max_atoms": 512,
    "schedule": "default",
    "checkpoint": None,
    "grid": {"t_start": 0.001, "t_end": 0.98, "n_nodes": 100},
    "k": 30,
    "smoothing_window": 5,
    "snapshot_times": [0.0, 0.25, 0.5, 0.75, 1.0],
    "seed_data": 0,
    "seed_train": 0,
    "seed_run": 0,
    "train": {
        "mode": "hard",
        "n_steps": 2000,
        "batch_size": 256,
        "learning_rate": 1e-3,
        "weight_decay": 1e-4,
        "lambda_bound": 10.0,
        "lambda_energy": 1.0,
        "delta_t": 1e-3,
    },
    "out_dir": "runs/latest",
    "threads": None,
}


def _merge_strict(base: dict, override: dict, prefix: str = "") -> dict:
    merged = copy.deepcopy(base)
    for key, value in override.items():
        where = f"{prefix}{key}"
        if key not in base:
            raise DomainError(f"unknown config key: {where}")
        if isinstance(base[key], dict) and isinstance(value, dict):
            merged[key] = _merge_strict(base[key], value, where + ".")
        else:
            merged[key] = copy.deepcopy(value)
    return merged


def resolve_config(config_path=None, out_dir=None, seed=None,
                   threads=None, overrides=None) -> dict:
    """Defaults <- config file <- explicit flags, strictly keyed."""
    cfg = copy.deepcopy(DEFAULT_CONFIG)
    dataset_params = {}
    if config_path is not None:
        with open(config_path) as fh:
            loaded = json.load(fh)
        if not isinstance(loaded, dict):
            raise DomainError("config file must hold a JSON object")
        # dataset_params keys depend on the dataset; validated below
        dataset_params.update(loaded.pop("dataset_params", {}) or {})
        cfg = _merge_strict(cfg, loaded)
    if overrides:
        overrides = dict(overrides)
        dataset_params.update(overrides.pop("dataset_params", {}) or {})
        cfg = _merge_strict(cfg, overrides)
    if out_dir is not None:
        cfg["out_dir"] = out_dir
    if seed is not None:
        cfg["seed_data"] = cfg["seed_train"] = cfg["seed_run"] = int(seed)
    if threads is not None:
        cfg["threads"] = int(threads)
    if cfg["dataset"] not in DATASET_PARAM_DEFAULTS:
        known = ", ".join(sorted(DATASET_PARAM_DEFAULTS))
        raise DomainError(
            f"unknown dataset {cfg['dataset']!r} (choose from {known})")
    cfg["dataset_params"] = _merge_strict(
        DATASET_PARAM_DEFAULTS[cfg["dataset"]], dataset_params,
        "dataset_params.")
    if cfg["schedule"] not in ("default", "learned"):
        raise DomainError("schedule must be 'default' or 'learned'")
    return cfg


def config_hash(cfg: dict) -> str:
    """Hash of the experiment identity; execution placement is excluded."""
    payload = {k: v for k, v in cfg.items() if k not in ("out_dir", "threads")}
    canon = json.dumps(payload, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canon.encode()).hexdigest()


def _thread_count(cfg: dict) -> int:
    if cfg["threads"] is not None:
        n = int(cfg["threads"])
        if n < 1:
            raise DomainError("threads must be >= 1")
        return n
    return os.cpu_count() or 1


def build_dataset(cfg: dict) -> ParticleCloud:
    name = cfg["dataset"]
    p = cfg["dataset_params"]
    seed = [cfg["seed_data"], 0]
    if name == "two_moons":
        return make_two_moons(p["n_samples"], noise=p["noise"], seed=seed)
    if name == "checkerboard":
        return make_checkerboard(p["n_samples"],
                                 cells_per_side=p["cells_per_side"],
                                 extent=p["extent"], seed=seed)
    if name == "s_curve":
        return make_s_curve(p["n_samples"], noise=p["noise"], seed=seed)
    if name == "gaussian_mixture":
        return make_gaussian_mixture(p["n_samples"], k=p["k"],
                                     radius=p["radius"],
                                     comp_std=p["comp_std"], seed=seed)
    atoms = two_atom_target(p["separation"])
    return ParticleCloud(atoms.atoms.copy(), cfg["seed_data"], "two_atoms")


def _path(cfg: dict, name: str) -> str:
    return os.path.join(cfg["out_dir"], name)


def run_generate(cfg: dict) -> dict:
    os.makedirs(cfg["out_dir"], exist_ok=True)
    tag = f"config_hash={config_hash(cfg)}"
    cloud = build_dataset(cfg)
    target = cloud_to_target(cloud, cfg["max_atoms"],
                             seed=[cfg["seed_data"], 1])
    prior = sample_prior(cfg["n_particles"], [cfg["seed_run"], 0])
    write_cloud_csv(_path(cfg, "prior.csv"), prior.points, comment=tag)
    write_cloud_csv(_path(cfg, "target.csv"), cloud.points, comment=tag)
    write_target_csv(_path(cfg, "atoms.csv"), target, comment=tag)
    print(f"generated {cfg['dataset']}: {len(prior)} prior particles, "
          f"{len(cloud)} cloud points, {len(target)} atoms -> "
          f"{cfg['out_dir']}")
    return {"prior": len(prior), "cloud": len(cloud), "atoms": len(target)}


def _cloud_resampler(points: np.ndarray):
    def sampler(rng, n):
        return points[rng.integers(0, len(points), n)]

    return sampler


def run_train(cfg: dict) -> pathnet.TrainResult:
    target_csv = _path(cfg, "target.csv")
    if not os.path.exists(target_csv):
        run_generate(cfg)
    points = read_cloud_csv(target_csv)
    t = cfg["train"]
    train_config = pathnet.TrainConfig(
        lambda_bound=t["lambda_bound"], lambda_energy=t["lambda_energy"],
        learning_rate=t["learning_rate"], weight_decay=t["weight_decay"],
        batch_size=t["batch_size"], n_steps=t["n_steps"],
        delta_t=t["delta_t"], seed=cfg["seed_train"], mode=t["mode"])
    result = pathnet.train(train_config, pathnet.gaussian_prior_sampler(),
                           _cloud_resampler(points))
    tag = config_hash(cfg)
    checkpoint = dict(result.checkpoint)
    checkpoint["config_hash"] = tag
    with open(_path(cfg, "checkpoint.json"), "w") as fh:
        json.dump(checkpoint, fh, sort_keys=True)
        fh.write("\n")
    trace = result.trace
    rows = [f"{int(s)},{float(a)!r},{float(b)!r},{float(e)!r},{float(g)!r}"
            for s, a, b, e, g in zip(trace.step, trace.total, trace.bound,
                                     trace.energy, trace.grad_norm)]
    _write_csv(_path(cfg, "train_trace.csv"),
               "step,total,bound,energy,grad_norm", rows, tag)
    print(f"trained {t['n_steps']} steps: final total "
          f"{trace.total[-1]:.6g} -> {cfg['out_dir']}")
    return result


def load_run_schedule(cfg: dict):
    if cfg["schedule"] == "default":
        return default_schedule()
    path = cfg["checkpoint"] or _path(cfg, "checkpoint.json")
    with open(path) as fh:
        checkpoint = json.load(fh)
    return pathnet.schedule_from_params(checkpoint["params"])


def _write_csv(path: str, header: str, rows, tag: str) -> None:
    with open(path, "w") as fh:
        fh.write(f"# config_hash={tag}\n")
        fh.write(header + "\n")
        fh.write("\n".join(rows))
        if rows:
            fh.write("\n")


def integrate_particles(points: np.ndarray, evaluator, grid: TimeGrid,
                        threads: int) -> EnsembleResult:
    """Chunked ensemble integration stitched in particle-index order."""
    n = len(points)
    threads = max(1, min(threads, n))
    if threads == 1:
        return integrate_ensemble(points, evaluator, grid)
    chunks = np.array_split(np.arange(n), threads)
    with ThreadPoolExecutor(max_workers=threads) as pool:
        parts = list(pool.map(
            lambda idx: integrate_ensemble(points[idx], evaluator, grid),
            chunks))
    glue = {name: np.concatenate([getattr(p, name) for p in parts], axis=1)
            for name in ("positions", "variational", "jacobians",
                         "strain_max", "strain_min", "divergence",
                         "velocity_norms")}
    return EnsembleResult(times=parts[0].times, **glue)


def _nearest_node(times: np.ndarray, requested: float) -> int:
    return int(np.argmin(np.abs(times - requested)))


def run_analyze(cfg: dict) -> dict:
    for required in ("prior.csv", "atoms.csv"):
        path = _path(cfg, required)
        if not os.path.exists(path):
            raise FileNotFoundError(f"missing input {path}; run generate")
    tag = config_hash(cfg)
    prior = read_cloud_csv(_path(cfg, "prior.csv"))
    target = read_target_csv(_path(cfg, "atoms.csv"))
    schedule = load_run_schedule(cfg)
    g = cfg["grid"]
    grid = TimeGrid(g["t_start"], g["t_end"], int(g["n_nodes"]) - 1)
    ens = integrate_particles(prior, flow_evaluator(target, schedule), grid,
                              _thread_count(cfg))

    series = build_indicator(ens.strain_max, ens.times, k=cfg["k"],
                             smoothing_window=cfg["smoothing_window"])
    report = detect_t_star(series, positions=ens.positions)
    if len(target) == 1 and not report.no_split:
        # a single atom contracts every particle identically; the series
        # still has time structure from the schedule, so the detector's
        # argmax would be spurious
        report = SplitReport(
            t_star=None, hotspot_positions=None,
            peak_slope=float(series.slope.max()),
            peak_lambda=float(series.topk_mean_lambda.max()),
            k=series.k, no_split=True, metadata=report.metadata)

    _write_trajectories(cfg, ens, tag)
    rows = [f"{float(t)!r},{float(m)!r},{float(c)!r},{float(s)!r}"
            for t, m, c, s in zip(series.times, series.topk_mean_lambda,
                                  series.cumulative_integral, series.slope)]
    _write_csv(_path(cfg, "indicator.csv"),
               "t,topk_mean_lambda,cumulative_integral,slope", rows, tag)
    _write_snapshots(cfg, ens, series, tag)
    payload = _report_payload(cfg, report, tag)
    with open(_path(cfg, "report.json"), "w") as fh:
        json.dump(payload, fh, sort_keys=True, indent=2)
        fh.write("\n")
    finding = "no split detected" if report.no_split else \
        f"t_star={report.t_star!r}"
    print(f"analyzed {len(prior)} particles over {len(ens.times)} nodes: "
          f"{finding} -> {cfg['out_dir']}")
    return payload


def _write_trajectories(cfg: dict, ens: EnsembleResult, tag: str) -> None:
    dets = (ens.variational[:, :, 0, 0] * ens.variational[:, :, 1, 1]
            - ens.variational[:, :, 0, 1] * ens.variational[:, :, 1, 0])
    rows = []
    n_nodes, n_particles = ens.strain_max.shape
    for p in range(n_particles):
        for i in range(n_nodes):
            j = ens.variational[i, p]
            rows.append(
                f"{p},{float(ens.times[i])!r},"
                f"{float(ens.positions[i, p, 0])!r},"
                f"{float(ens.positions[i, p, 1])!r},"
                f"{float(j[0, 0])!r},{float(j[0, 1])!r},"
                f"{float(j[1, 0])!r},{float(j[1, 1])!r},"
                f"{float(ens.strain_max[i, p])!r},"
                f"{float(ens.strain_min[i, p])!r},"
                f"{float(ens.divergence[i, p])!r},"
                f"{float(dets[i, p])!r}")
    _write_csv(_path(cfg, "trajectories.csv"),
               "particle_id,t,x,y,j11,j12,j21,j22,lambda_max,lambda_min,"
               "delta,det_j", rows, tag)


def _write_snapshots(cfg: dict, ens: EnsembleResult, series, tag: str) -> None:
    n_particles = ens.strain_max.shape[1]
    for idx, requested in enumerate(cfg["snapshot_times"]):
        node = _nearest_node(ens.times, float(requested))
        flags = np.zeros(n_particles, dtype=int)
        flags[series.topk_indices[node]] = 1
        rows = [
            f"{p},{float(ens.times[node])!r},"
            f"{float(ens.positions[node, p, 0])!r},"
            f"{float(ens.positions[node, p, 1])!r},"
            f"{float(ens.strain_max[node, p])!r},"
            f"{float(ens.divergence[node, p])!r},{int(flags[p])}"
            for p in range(n_particles)
        ]
        _write_csv(_path(cfg, f"snapshots_t{idx}.csv"),
                   "particle_id,t,x,y,lambda_max,delta,top_k", rows, tag)


def _report_payload(cfg: dict, report, tag: str) -> dict:
    hotspots = None
    if report.hotspot_positions is not None:
        hotspots = [[float(x), float(y)]
                    for x, y in report.hotspot_positions]
    return {
        "config_hash": tag,
        "t_star": report.t_star,
        "no_split": report.no_split,
        "peak_slope": report.peak_slope,
        "peak_lambda": report.peak_lambda,
        "k": report.k,
        "hotspots": hotspots,
        "config_echo": copy.deepcopy(cfg),
    }


def run_report(cfg: dict) -> str:
    report_path = _path(cfg, "report.json")
    if not os.path.exists(report_path):
        raise FileNotFoundError(f"missing input {report_path}; run analyze")
    with open(report_path) as fh:
        payload = json.load(fh)
    lines = ["# Splitting analysis", ""]
    if payload["no_split"]:
        lines.append("Finding: no split detected.")
    else:
        lines.append(f"Finding: split onset at t_star={payload['t_star']!r}.")
    lines += [
        "",
        f"- config_hash: {payload['config_hash']}",
        f"- dataset: {payload['config_echo']['dataset']}",
        f"- schedule: {payload['config_echo']['schedule']}",
        f"- top-k size: {payload['k']}",
        f"- peak slope: {payload['peak_slope']!r}",
        f"- peak top-k mean eigenvalue: {payload['peak_lambda']!r}",
    ]
    if payload["hotspots"]:
        arr = np.asarray(payload["hotspots"], dtype=float)
        cx, cy = arr.mean(axis=0)
        lines.append(f"- hotspot centroid: ({float(cx)!r}, {float(cy)!r})")
    lines += [
        "",
        "Seeds: "
        f"data={payload['config_echo']['seed_data']}, "
        f"train={payload['config_echo']['seed_train']}, "
        f"run={payload['config_echo']['seed_run']}",
        "",
    ]
    text = "\n".join(lines)
    out = _path(cfg, "report.md")
    with open(out, "w") as fh:
        fh.write(text)
    print(f"wrote {out}")
    return text


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="splitflow",
        description="Particle transport analysis: generate data, train the "
                    "coefficient network, integrate trajectories, and "
                    "report the splitting time.")
    parser.add_argument("--config", help="JSON config file")
    parser.add_argument("--out", help="output directory (overrides config)")
    parser.add_argument("--seed", type=int,
                        help="master seed applied to data/train/run")
    parser.add_argument("--threads", type=int,
                        help="worker threads for particle integration")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, text in (("generate", "write prior/target/atom files"),
                       ("train", "fit the coefficient network"),
                       ("analyze", "integrate particles and locate t*"),
                       ("report", "render a markdown summary")):
        sub.add_parser(name, help=text)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = resolve_config(config_path=args.config, out_dir=args.out,
                             seed=args.seed, threads=args.threads)
        if args.command == "generate":
            run_generate(cfg)
        elif args.command == "train":
            run_train(cfg)
        elif args.command == "analyze":
            run_analyze(cfg)
        else:
            run_report(cfg)
        return 0
    except TrainingDivergenceError as err:
        print(f"error: training diverged at step {err.step}: {err}",
              file=sys.stderr)
        return 3
    except (BlowUpError, InsufficientSamplesError) as err:
        print(f"error: {err}", file=sys.stderr)
        return 3
    except (DomainError, SingularTimeError, json.JSONDecodeError) as err:
        print(f"error: {err}", file=sys.stderr)
        return 2
    except OSError as err:
        print(f"error: {err}", file=sys.stderr)
        return 4
    except SplitflowError as err:
        print(f"error: {err}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
