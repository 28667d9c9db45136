"""Small disc-recovery problem used to benchmark the adversarial training loop.

Truth: a disc of random radius and centre holding one arrival value,
background elsewhere. Measurement: the same disc with a random half of its
pixels removed.
"""
from __future__ import annotations

import time
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from .rastercore import DEFAULT_HORIZON, GridSpec, NormalizedField, write_farr
from .synthmeas import DatasetManifest

DISC_VALUE = 0.3


def disc_pair(size: int, rng: np.random.Generator, keep: float = 0.5,
              radius_range=(3.0, 6.0)) -> tuple[np.ndarray, np.ndarray]:
    r = rng.uniform(*radius_range)
    c = (size - 1) / 2.0
    cy, cx = rng.uniform(c - size / 8, c + size / 8, 2)
    jj, ii = np.mgrid[0:size, 0:size]
    d = np.hypot(jj - cy, ii - cx)
    inside = d <= r
    truth = np.where(inside, DISC_VALUE, 1.0)
    kept = inside & (rng.random((size, size)) < keep)
    meas = np.where(kept, truth, 1.0)
    return truth, meas


def disc_truth_threshold() -> float:
    """Normalized arrival separating disc interior from background."""
    return 0.5 * (DISC_VALUE + 1.0)


def build_disc_dataset(out_dir, n_train: int = 500, n_val: int = 100, size: int = 16,
                       seed: int = 0) -> DatasetManifest:
    out_dir = Path(out_dir)
    spec = GridSpec(size, size, 60.0)
    rng = np.random.default_rng(seed)
    records = []
    for split, n in (("train", n_train), ("validation", n_val)):
        for r in range(n):
            truth, meas = disc_pair(size, rng)
            rel_a = f"{split}/{r:05d}_arrival.farr"
            rel_m = f"{split}/{r:05d}_measurement.farr"
            write_farr(out_dir / rel_a, NormalizedField(spec, truth))
            write_farr(out_dir / rel_m, NormalizedField(spec, meas))
            records.append({"arrival": rel_a, "measurement": rel_m, "seed": seed, "sim_id": -1,
                            "split": split})
    manifest = DatasetManifest(records=records, grid=asdict(spec), seed=seed, root=out_dir)
    manifest.save(out_dir / "manifest.json")
    return manifest


@dataclass
class BenchmarkResult:
    history: list[dict]
    first_mismatch: float
    final_mismatch: float
    mean_sc: float
    min_sc: float
    seconds: float

    @property
    def mismatch_ratio(self) -> float:
        return self.final_mismatch / self.first_mismatch


def default_benchmark_config(seed: int = 0, epochs: int = 100):
    from .cwgan import TrainConfig

    return TrainConfig(epochs=epochs, batch_size=8, learning_rate=3e-4, seed=seed,
                       checkpoint_every=epochs)


def run_disc_benchmark(out_dir, train_cfg=None, n_train: int = 500, n_val: int = 100,
                       size: int = 16, seed: int = 0, k: int = 100) -> BenchmarkResult:
    """Train on disc pairs, then score the K-member ensemble mean of every validation case.

    Writes the dataset, checkpoints, ``train_log.jsonl`` and one ``mean_XXXXX.farr``
    per validation case under ``out_dir``.
    """
    from .cwgan import PairStore, config_for_size, train
    from .evalmetrics import confusion, scores
    from .posterior import pixel_stats, sample_ensemble
    from .rastercore import BurnMask

    start = time.perf_counter()
    out_dir = Path(out_dir)
    train_cfg = train_cfg or default_benchmark_config(seed)
    manifest = build_disc_dataset(out_dir / "data", n_train, n_val, size, seed)
    params, history = train(manifest, *config_for_size(size), train_cfg, out_dir / "train")
    store = PairStore(manifest, "validation")
    thr = disc_truth_threshold()
    sc = []
    for n in range(len(store)):
        truth, meas = store.get(n)
        ens = sample_ensemble(params, NormalizedField(manifest.spec, meas.astype(np.float64)), k,
                              seed=seed * 100_003 + n)
        summary = pixel_stats(ens)
        write_farr(out_dir / f"mean_{n:05d}.farr", summary.mean)
        truth_mask = BurnMask(manifest.spec, truth < thr)
        sc.append(scores(confusion(summary.mean, truth_mask, thr * DEFAULT_HORIZON))[0] or 0.0)
    return BenchmarkResult(history, history[0]["mismatch"], history[-1]["mismatch"],
                           float(np.mean(sc)), float(np.min(sc)), time.perf_counter() - start)
