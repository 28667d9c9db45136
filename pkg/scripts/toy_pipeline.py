"""End-to-end smoke run of every CLI stage on a 64 x 64 toy domain.

    python scripts/toy_pipeline.py WORKDIR [--seed N] [--config configs/toy.json]

The ground-truth perimeter for the eval stage is the bounding box of the
first validation pair's burned area at its median arrival time.
"""
from __future__ import annotations

import argparse
import json
import subprocess
import sys
from pathlib import Path

import numpy as np

from pyrotime.geodata import perimeter_to_geojson, square_polygon
from pyrotime.rastercore import DEFAULT_HORIZON, read_farr

ROOT = Path(__file__).resolve().parents[1]


def stage(*argv) -> None:
    cmd = [sys.executable, "-m", "pyrotime.cli", *map(str, argv)]
    print("+", " ".join(cmd[2:]), flush=True)
    subprocess.run(cmd, check=True)


def toy_perimeter(arrival_path, out_path) -> float:
    truth = read_farr(arrival_path)
    hours = truth.values * DEFAULT_HORIZON
    burned = truth.values < 1.0
    t = float(np.median(hours[burned]))
    jj, ii = np.nonzero(hours <= t)
    poly = square_polygon(truth.spec, ii.min() - 0.5, jj.min() - 0.5, ii.max() + 0.5,
                          jj.max() + 0.5, observed_time=t)
    Path(out_path).write_text(json.dumps(perimeter_to_geojson(poly)))
    return t


def run_pipeline(workdir, seed: int = 0, config=ROOT / "configs" / "toy.json",
                 workers: int = 1) -> dict:
    w = Path(workdir)
    common = ["--config", config, "--seed", seed, "--workers", workers]
    stage("simulate", *common, "--out", w / "sims")
    stage("dataset", *common, "--sims", w / "sims", "--out", w / "data")
    stage("train", *common, "--manifest", w / "data" / "manifest.json", "--out", w / "train")
    manifest = json.loads((w / "data" / "manifest.json").read_text())
    first = next(r for r in manifest["records"] if r["split"] == "validation")
    stage("infer", *common, "--checkpoint", w / "train" / "final.ckpt",
          "--measurement-high", w / "data" / first["measurement"], "--out", w / "infer")
    toy_perimeter(w / "data" / first["arrival"], w / "perimeter.geojson")
    stage("eval", *common, "--pred", w / "infer" / "mean.farr",
          "--perimeter", w / "perimeter.geojson", "--out", w / "eval")
    return json.loads((w / "eval" / "report.json").read_text())


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("workdir")
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--config", default=str(ROOT / "configs" / "toy.json"))
    ap.add_argument("--workers", type=int, default=1)
    args = ap.parse_args()
    report = run_pipeline(args.workdir, args.seed, args.config, args.workers)
    print(json.dumps(report, indent=2, sort_keys=True))


if __name__ == "__main__":
    main()
