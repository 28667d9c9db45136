"""``pyrotime`` command line: one subcommand per pipeline stage, file-based handoff.

Exit codes: 0 success, 1 usage error, 2 data error.
"""
from __future__ import annotations

import argparse
import dataclasses
import hashlib
import json
import logging
import os
import platform
import sys
from concurrent.futures import ProcessPoolExecutor
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__
from .rastercore import GridSpec, crop_center, read_farr, write_farr

log = logging.getLogger("pyrotime")

SEED_ENV = "PYROTIME_SEED"


class UsageError(Exception):
    pass


class DataError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}\n\n{self.format_help()}")


# ---------------------------------------------------------------------------
# configuration

STAGE_DEFAULTS = {
    "simulate": {"n": 20, "grid": "512", "resolution": 60.0, "duration": 48.0, "base_ros": 0.05,
                 "max_wind": 5.0, "fine_factor": 2, "out_dir": None, "ros": {}},
    "dataset": {"sims": None, "out": None, "n_train": 8000, "n_val": 2000, "grid": None,
                "measurement": {}, "augment": {}},
    "train": {"manifest": None, "out": None, "epochs": 200, "batch": 16, "size": None,
              "resume": None, "learning_rate": 1e-4, "critic_steps": 5, "gp_weight": 10.0,
              "latent_dim": 64, "checkpoint_every": 10, "generator": {}, "critic": {}},
    "infer": {"checkpoint": None, "measurement_high": None, "measurement_both": None, "k": 200,
              "weights": "0.2,0.8", "out": None, "horizon": 72.0},
    "ingest": {"af_csv": None, "grid_center": None, "grid": "512", "resolution": 60.0,
               "ignition_day": None, "tiers": "both", "window_hours": 48.0, "out": None},
    "eval": {"pred": None, "perimeter": None, "reported_ignition": None, "out": None,
             "case_id": "case"},
    "plot": {"measurement": None, "mean": None, "std": None, "categories": None, "out": None},
}
SHARED_KEYS = {"seed", "workers"}
REQUIRED = {
    "simulate": ["out_dir"], "dataset": ["sims", "out"], "train": ["manifest", "out"],
    "infer": ["checkpoint", "out"], "ingest": ["af_csv", "grid_center", "ignition_day", "out"],
    "eval": ["pred", "perimeter", "out"], "plot": ["out"],
}


def load_config_file(path) -> dict:
    path = Path(path)
    text = path.read_text()
    if path.suffix == ".toml":
        try:
            import tomllib
        except ModuleNotFoundError:
            import tomli as tomllib
        return tomllib.loads(text)
    return json.loads(text)


def effective_config(stage: str, args: argparse.Namespace) -> dict:
    """Stage defaults, then the config file section, then explicitly given flags."""
    cfg = json.loads(json.dumps(STAGE_DEFAULTS[stage]))
    allowed = set(cfg) | SHARED_KEYS
    if getattr(args, "config", None):
        doc = load_config_file(args.config)
        unknown_stages = set(doc) - set(STAGE_DEFAULTS)
        if unknown_stages:
            raise UsageError(f"unknown config section(s): {sorted(unknown_stages)}")
        section = doc.get(stage, {})
        unknown = set(section) - allowed
        if unknown:
            raise UsageError(f"unknown key(s) in [{stage}] config: {sorted(unknown)}")
        cfg.update(section)
    for key, val in vars(args).items():
        if key in allowed and val is not None:
            cfg[key] = val
    if cfg.get("seed") is None:
        env = os.environ.get(SEED_ENV)
        cfg["seed"] = int(env) if env else 0
    cfg["seed"] = int(cfg["seed"])
    if cfg.get("workers") is None:
        cfg["workers"] = os.cpu_count() or 1
    missing = [k for k in REQUIRED[stage] if cfg.get(k) is None]
    if missing:
        raise UsageError(f"{stage}: missing required setting(s) {['--' + m.replace('_', '-') for m in missing]}")
    return cfg


def config_hash(stage: str, cfg: dict) -> str:
    payload = {k: v for k, v in cfg.items() if k != "workers"}
    blob = json.dumps({"stage": stage, "config": payload}, sort_keys=True, default=str)
    return hashlib.sha256(blob.encode()).hexdigest()


def write_provenance(out_dir, stage: str, cfg: dict, argv):
    import torch

    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    rec = {
        "command": stage, "argv": list(argv), "config": cfg,
        "config_hash": config_hash(stage, cfg), "seed": cfg.get("seed"),
        "versions": {"pyrotime": __version__, "python": platform.python_version(),
                     "numpy": np.__version__, "torch": torch.__version__},
        "time_utc": datetime.now(timezone.utc).isoformat(timespec="seconds"),
    }
    with open(out_dir / "provenance.jsonl", "a") as fh:
        fh.write(json.dumps(rec, sort_keys=True, default=str) + "\n")


def parse_grid(text, resolution: float, origin=(0.0, 0.0)) -> GridSpec:
    """``N`` or ``NXxNY`` pixel counts."""
    text = str(text).lower()
    try:
        nx, ny = (int(v) for v in text.split("x")) if "x" in text else (int(text),) * 2
    except ValueError:
        raise UsageError(f"bad grid size {text!r}; use N or NXxNY") from None
    return GridSpec(nx, ny, float(resolution), float(origin[0]), float(origin[1]))


def _dataclass_from(cls, values: dict, where: str):
    names = {f.name for f in dataclasses.fields(cls)}
    unknown = set(values) - names
    if unknown:
        raise UsageError(f"unknown key(s) in {where}: {sorted(unknown)}")
    return cls(**values)


# ---------------------------------------------------------------------------
# stages

def _simulate_one(task):
    from .firesim import solve_arrival, write_config_sidecar

    config, model, k, out_dir = task
    field = solve_arrival(config, model)
    write_farr(Path(out_dir) / f"sim_{k:03d}.farr", field, horizon=72.0)
    write_config_sidecar(Path(out_dir) / f"sim_{k:03d}.json", config, model, k)
    return k


def cmd_simulate(cfg: dict):
    from .firesim import RosModel, sample_training_configs

    spec = parse_grid(cfg["grid"], cfg["resolution"])
    ros = _dataclass_from(RosModel, {"base_ros": cfg["base_ros"], **cfg["ros"]}, "simulate.ros")
    configs = sample_training_configs(cfg["n"], cfg["seed"], spec, ros.base_ros, cfg["duration"],
                                      cfg["max_wind"], cfg["fine_factor"])
    out = Path(cfg["out_dir"])
    out.mkdir(parents=True, exist_ok=True)
    tasks = [(c, ros, k, str(out)) for k, c in enumerate(configs)]
    if cfg["workers"] > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(min(cfg["workers"], len(tasks))) as pool:
            list(pool.map(_simulate_one, tasks))
    else:
        for t in tasks:
            _simulate_one(t)
    log.info("wrote %d simulations to %s", len(tasks), out)
    return out


def cmd_dataset(cfg: dict):
    from .synthmeas import AugmentParams, MeasurementParams, build_dataset

    mp = _dataclass_from(MeasurementParams, cfg["measurement"], "dataset.measurement")
    ap = _dataclass_from(AugmentParams, cfg["augment"], "dataset.augment")
    sims = Path(cfg["sims"])
    if not sims.is_dir():
        raise DataError(f"simulation directory {sims} does not exist")
    if cfg["grid"] is not None:
        first = sorted(sims.glob("*.farr"))
        if first:
            spec = read_farr(first[0]).spec
            target = parse_grid(cfg["grid"], spec.resolution)
            if (target.nx, target.ny) != (spec.nx, spec.ny):
                cropped = Path(cfg["out"]) / "_cropped_sims"
                for p in first:
                    write_farr(cropped / p.name, crop_center(read_farr(p), target.nx, target.ny))
                sims = cropped
    return build_dataset(sims, cfg["out"], ap, mp, cfg["n_train"], cfg["n_val"], cfg["seed"],
                         cfg["workers"])


def cmd_train(cfg: dict):
    from .cwgan import CriticConfig, GeneratorConfig, TrainConfig, config_for_size, train
    from .synthmeas import DatasetManifest

    manifest_path = Path(cfg["manifest"])
    if not manifest_path.exists():
        raise DataError(f"manifest {manifest_path} does not exist")
    manifest = DatasetManifest.load(manifest_path)
    size = cfg["size"] or manifest.spec.nx
    g0, c0 = config_for_size(size, cfg["latent_dim"])
    gen_cfg = _dataclass_from(GeneratorConfig, {**dataclasses.asdict(g0), **cfg["generator"]},
                              "train.generator")
    critic_cfg = _dataclass_from(CriticConfig, {**dataclasses.asdict(c0), **cfg["critic"]},
                                 "train.critic")
    tcfg = TrainConfig(epochs=cfg["epochs"], batch_size=cfg["batch"], critic_steps=cfg["critic_steps"],
                       learning_rate=cfg["learning_rate"], gp_weight=cfg["gp_weight"],
                       seed=cfg["seed"], checkpoint_every=cfg["checkpoint_every"])
    params, history = train(manifest, gen_cfg, critic_cfg, tcfg, cfg["out"], cfg["resume"])
    return history


def cmd_infer(cfg: dict):
    from .cwgan import load_checkpoint
    from .posterior import merge_weighted, pixel_stats, sample_ensemble

    params, _ = load_checkpoint(cfg["checkpoint"])
    paths = [p for p in (cfg["measurement_high"], cfg["measurement_both"]) if p]
    if not paths:
        raise UsageError("infer: give --measurement-high and/or --measurement-both")
    ensembles = []
    for tier, p in (("high", cfg["measurement_high"]), ("high+nominal", cfg["measurement_both"])):
        if not p:
            continue
        meas = read_farr(p)
        ensembles.append(sample_ensemble(params, meas, cfg["k"], cfg["seed"] + len(ensembles),
                                         source={"measurement": str(p), "tier": tier}))
    weights = [float(w) for w in str(cfg["weights"]).split(",")]
    if len(ensembles) == 2:
        ens = merge_weighted(ensembles[0], ensembles[1], weights)
    else:
        ens = ensembles[0]
    summary = pixel_stats(ens, cfg["horizon"])
    out = Path(cfg["out"])
    out.mkdir(parents=True, exist_ok=True)
    write_farr(out / "mean.farr", summary.mean, horizon=cfg["horizon"])
    write_farr(out / "std.farr", summary.std, horizon=cfg["horizon"])
    doc = summary.to_json()
    doc.update({"k": cfg["k"], "tier_weights": weights if len(ensembles) == 2 else [1.0],
                "measurements": [str(p) for p in paths], "seed": cfg["seed"]})
    (out / "summary.json").write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")
    return summary


def cmd_ingest(cfg: dict):
    from .geodata import TIER_SETS, GriddingStats, grid_detections, parse_af_csv, parse_timestamp

    try:
        lat, lon = (float(v) for v in str(cfg["grid_center"]).split(","))
    except ValueError:
        raise UsageError("--grid-center must be LAT,LON") from None
    spec = parse_grid(cfg["grid"], cfg["resolution"], (lat, lon))
    day = parse_timestamp(str(cfg["ignition_day"]) if "T" in str(cfg["ignition_day"])
                          else f"{cfg['ignition_day']}T00:00:00Z")
    dets = parse_af_csv(cfg["af_csv"])
    tiers = ["high", "high+nominal"] if cfg["tiers"] == "both" else [cfg["tiers"]]
    out = Path(cfg["out"])
    out.mkdir(parents=True, exist_ok=True)
    written = []
    for name in tiers:
        if name not in TIER_SETS:
            raise UsageError(f"unknown tier set {name!r}; use high, high+nominal or both")
        stats = GriddingStats()
        field = grid_detections(dets, spec, day, TIER_SETS[name], cfg["window_hours"], stats=stats)
        written.append(write_farr(out / f"measurement_{name}.farr", field))
        log.info("%s: %s", name, stats)
    return written


def cmd_eval(cfg: dict):
    from .evalmetrics import evaluate_case
    from .geodata import load_perimeter

    pred = read_farr(cfg["pred"])
    perim = load_perimeter(cfg["perimeter"])
    report, _ = evaluate_case(pred, perim, cfg["reported_ignition"], cfg["case_id"],
                              out_dir=cfg["out"])
    print(json.dumps(report.to_json(), sort_keys=True))
    return report


def cmd_plot(cfg: dict):
    from .plotting import plot_category, plot_field

    out = Path(cfg["out"])
    made = []
    for key in ("measurement", "mean", "std"):
        if cfg[key]:
            made.append(plot_field(cfg[key], out / f"{key}.png", key))
    if cfg["categories"]:
        made.append(plot_category(cfg["categories"], out / "categories.png"))
    if not made:
        raise UsageError("plot: nothing to plot")
    return made


COMMANDS = {
    "simulate": cmd_simulate, "dataset": cmd_dataset, "train": cmd_train, "infer": cmd_infer,
    "ingest": cmd_ingest, "eval": cmd_eval, "plot": cmd_plot,
}

OUT_KEY = {"simulate": "out_dir"}


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="pyrotime", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", parser_class=_Parser)

    def stage(name, help_):
        sp = sub.add_parser(name, help=help_)
        sp.add_argument("--config", help="JSON or TOML config file with a [%s] section" % name)
        sp.add_argument("--seed", type=int)
        sp.add_argument("--workers", type=int)
        return sp

    s = stage("simulate", "generate eikonal fire-spread arrival rasters")
    s.add_argument("--n", type=int)
    s.add_argument("--out-dir", "--out", dest="out_dir")
    s.add_argument("--grid")
    s.add_argument("--resolution", type=float)
    s.add_argument("--duration", type=float)
    s.add_argument("--base-ros", type=float)
    s.add_argument("--fine-factor", type=int)

    s = stage("dataset", "augment simulations and apply the measurement operator")
    s.add_argument("--sims")
    s.add_argument("--out")
    s.add_argument("--n-train", type=int)
    s.add_argument("--n-val", type=int)
    s.add_argument("--grid")

    s = stage("train", "train the conditional WGAN")
    s.add_argument("--manifest")
    s.add_argument("--out")
    s.add_argument("--epochs", type=int)
    s.add_argument("--batch", type=int)
    s.add_argument("--size", type=int)
    s.add_argument("--resume")
    s.add_argument("--learning-rate", type=float)
    s.add_argument("--checkpoint-every", type=int)

    s = stage("infer", "sample arrival-time ensembles and summarize them")
    s.add_argument("--checkpoint")
    s.add_argument("--measurement-high")
    s.add_argument("--measurement-both")
    s.add_argument("--k", type=int)
    s.add_argument("--weights")
    s.add_argument("--out")

    s = stage("ingest", "grid an active-fire CSV extract into measurement rasters")
    s.add_argument("--af-csv")
    s.add_argument("--grid-center")
    s.add_argument("--grid")
    s.add_argument("--resolution", type=float)
    s.add_argument("--ignition-day")
    s.add_argument("--tiers", choices=["high", "high+nominal", "both"])
    s.add_argument("--window-hours", type=float)
    s.add_argument("--out")

    s = stage("eval", "score a predicted arrival raster against a perimeter")
    s.add_argument("--pred")
    s.add_argument("--perimeter")
    s.add_argument("--reported-ignition")
    s.add_argument("--case-id")
    s.add_argument("--out")

    s = stage("plot", "render rasters as PNG heatmaps")
    s.add_argument("--measurement")
    s.add_argument("--mean")
    s.add_argument("--std")
    s.add_argument("--categories")
    s.add_argument("--out")
    return p


def run(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command is None:
            raise UsageError(parser.format_help())
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                            format="%(levelname)s %(name)s: %(message)s")
        cfg = effective_config(args.command, args)
        COMMANDS[args.command](cfg)
        write_provenance(cfg[OUT_KEY.get(args.command, "out")], args.command, cfg, argv)
    except UsageError as exc:
        print(str(exc), file=sys.stderr)
        return 1
    except (DataError, ValueError, OSError, KeyError) as exc:
        print(f"pyrotime: error: {exc}", file=sys.stderr)
        return 2
    return 0


def main():
    sys.exit(run())


if __name__ == "__main__":
    main()
