"""Train the 16 x 16 disc-recovery benchmark and report convergence.

    python scripts/toy_benchmark.py WORKDIR [--seed N] [--epochs N] [--k K]
"""
from __future__ import annotations

import argparse
import json

import torch

from pyrotime.toy import default_benchmark_config, run_disc_benchmark


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("workdir")
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--epochs", type=int, default=default_benchmark_config().epochs)
    ap.add_argument("--k", type=int, default=100)
    ap.add_argument("--threads", type=int, default=1)
    args = ap.parse_args()
    torch.set_num_threads(args.threads)
    res = run_disc_benchmark(args.workdir, default_benchmark_config(args.seed, args.epochs),
                             seed=args.seed, k=args.k)
    print(json.dumps({"first_mismatch": res.first_mismatch, "final_mismatch": res.final_mismatch,
                      "mismatch_ratio": res.mismatch_ratio, "mean_sc": res.mean_sc,
                      "min_sc": res.min_sc, "minutes": res.seconds / 60}, indent=2))


if __name__ == "__main__":
    main()
