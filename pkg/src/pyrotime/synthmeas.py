"""Augmentation, the synthetic active-fire measurement operator, and dataset assembly.

Random draws in :func:`measure` happen in this fixed order from
``numpy.random.default_rng(seed)``; any reimplementation must match it to
reproduce outputs bit for bit:

1. ``uniform(t_lo, t_hi, n_obs)`` measurement times, then sorted
2. ``uniform(lb_lo, lb_hi, n_obs)`` look-back widths, one per sorted time
3. for each copy, ``random(coarse_shape)`` compared ``< mask_keep_fraction``
4. for each occlusion, ``integers(0, ny_c)`` row then ``integers(0, nx_c)`` column
   of the patch centre
5. ``uniform(shift_lo, shift_hi)`` ignition-day shift
"""
from __future__ import annotations

import json
import logging
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .rastercore import (
    BACKGROUND, DEFAULT_HORIZON, ArrivalField, GridSpec, NormalizedField,
    normalize, read_farr, resample_array, write_farr,
)

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class MeasurementParams:
    n_obs: int = 4
    obs_window: tuple[float, float] = (2.0, 48.0)
    lookback_range: tuple[float, float] = (6.0, 12.0)
    mask_keep_fraction: float = 0.5
    n_occlusions: int = 3
    occlusion_size_km: float = 3.0
    day_shift_range: tuple[float, float] = (0.0, 24.0)
    sensor_resolution: float = 375.0
    horizon: float = DEFAULT_HORIZON

    def __post_init__(self):
        for name in ("obs_window", "lookback_range", "day_shift_range"):
            lo, hi = getattr(self, name)
            object.__setattr__(self, name, (float(lo), float(hi)))
            if not hi > lo:
                raise ValueError(f"{name} must be a non-degenerate range, got {(lo, hi)}")
        if self.n_obs < 1:
            raise ValueError("n_obs must be >= 1")
        if not 0 < self.mask_keep_fraction <= 1:
            raise ValueError("mask_keep_fraction must lie in (0, 1]")
        if self.n_occlusions < 0 or self.occlusion_size_km < 0:
            raise ValueError("occlusion settings must be non-negative")
        if not self.sensor_resolution > 0 or not self.horizon > 0:
            raise ValueError("sensor_resolution and horizon must be positive")


@dataclass(frozen=True)
class AugmentParams:
    rotation_range: tuple[float, float] = (0.0, 360.0)
    translation_box_km: float = 9.0
    samples_per_sim: int = 500

    def __post_init__(self):
        object.__setattr__(self, "rotation_range", tuple(float(v) for v in self.rotation_range))
        if self.translation_box_km < 0 or self.samples_per_sim < 1:
            raise ValueError("translation box must be >= 0 and samples_per_sim >= 1")

    def check_fits(self, spec: GridSpec):
        extent = min(spec.domain_extent)
        if self.translation_box_km * 1000.0 > extent:
            raise ValueError(f"{self.translation_box_km} km translation box exceeds the "
                             f"{extent / 1000:.2f} km domain")


# ---------------------------------------------------------------------------
# augmentation

def rotate_array(values: np.ndarray, degrees: float, fill=BACKGROUND) -> np.ndarray:
    """Rotate counterclockwise (north-up view) about the grid centre, nearest-neighbour."""
    ny, nx = values.shape
    theta = math.radians(degrees)
    c = round(math.cos(theta), 12)
    s = round(math.sin(theta), 12)
    ci = (nx - 1) / 2.0
    cj = (ny - 1) / 2.0
    jj, ii = np.mgrid[0:ny, 0:nx]
    x = ii - ci
    y = cj - jj
    xs = c * x + s * y
    ys = -s * x + c * y
    src_i = np.floor(xs + ci + 0.5).astype(np.int64)
    src_j = np.floor(cj - ys + 0.5).astype(np.int64)
    ok = (src_i >= 0) & (src_i < nx) & (src_j >= 0) & (src_j < ny)
    out = np.full(values.shape, fill, dtype=values.dtype)
    out[ok] = values[src_j[ok], src_i[ok]]
    return out


def shift_array(values: np.ndarray, di: int, dj: int, fill=BACKGROUND) -> np.ndarray:
    """Move content ``di`` columns east and ``dj`` rows south."""
    ny, nx = values.shape
    out = np.full(values.shape, fill, dtype=values.dtype)
    if abs(di) >= nx or abs(dj) >= ny:
        return out
    out[max(dj, 0):ny + min(dj, 0), max(di, 0):nx + min(di, 0)] = \
        values[max(-dj, 0):ny - max(dj, 0), max(-di, 0):nx - max(di, 0)]
    return out


def augment(field: ArrivalField, rotation: float, translation: tuple[float, float],
            box_km: float = 9.0) -> ArrivalField:
    """Rotate then translate by whole pixels; ``translation`` is (east m, north m)."""
    dx, dy = translation
    half = box_km * 500.0
    if abs(dx) > half or abs(dy) > half:
        raise ValueError(f"translation {translation} outside the {box_km} km box")
    res = field.spec.resolution
    di = int(math.floor(dx / res + 0.5))
    dj = -int(math.floor(dy / res + 0.5))
    vals = shift_array(rotate_array(field.values, rotation), di, dj)
    return ArrivalField(field.spec, vals)


# ---------------------------------------------------------------------------
# measurement operator

@dataclass(frozen=True)
class MeasurementDraw:
    """Everything :func:`measure` drew and produced for one sample."""

    times: np.ndarray
    lookbacks: np.ndarray
    keep_masks: np.ndarray
    occlusion_centers: np.ndarray
    day_shift: float
    coarse_arrival: np.ndarray
    coarse_measurement: np.ndarray
    measurement_hours: np.ndarray
    shifted_arrival: ArrivalField
    measurement: NormalizedField


def measure_detailed(field: ArrivalField, params: MeasurementParams | None = None,
                     seed=0) -> MeasurementDraw:
    params = params or MeasurementParams()
    spec = field.spec
    if spec.resolution > params.sensor_resolution:
        raise ValueError(f"field resolution {spec.resolution} m is coarser than the "
                         f"{params.sensor_resolution} m sensor")
    rng = np.random.default_rng(seed)

    coarse = resample_array(field.values, spec.resolution, params.sensor_resolution)
    cshape = coarse.shape

    times = np.sort(rng.uniform(*params.obs_window, params.n_obs))
    lookbacks = rng.uniform(*params.lookback_range, params.n_obs)
    starts = np.maximum(times - lookbacks, 0.0)

    keep = np.stack([rng.random(cshape) < params.mask_keep_fraction for _ in range(params.n_obs)])
    combined = np.full(cshape, BACKGROUND)
    for k in range(params.n_obs):
        hit = keep[k] & (coarse > starts[k]) & (coarse <= times[k])
        copy = np.where(hit, times[k], BACKGROUND)
        combined = np.minimum(combined, copy)

    size = int(round(params.occlusion_size_km * 1000.0 / params.sensor_resolution))
    centers = np.zeros((params.n_occlusions, 2), dtype=np.int64)
    for k in range(params.n_occlusions):
        cj = rng.integers(0, cshape[0])
        ci = rng.integers(0, cshape[1])
        centers[k] = (cj, ci)
        if size == 0:
            continue
        j0 = max(cj - size // 2, 0)
        i0 = max(ci - size // 2, 0)
        combined[j0:cj - size // 2 + size, i0:ci - size // 2 + size] = BACKGROUND

    meas_hours = resample_array(combined, params.sensor_resolution, spec.resolution, spec.shape)

    shift = float(rng.uniform(*params.day_shift_range))
    shifted = field.values + shift
    meas_shifted = meas_hours + shift

    return MeasurementDraw(
        times=times, lookbacks=lookbacks, keep_masks=keep, occlusion_centers=centers,
        day_shift=shift, coarse_arrival=coarse, coarse_measurement=combined,
        measurement_hours=meas_hours,
        shifted_arrival=ArrivalField(spec, shifted),
        measurement=normalize(ArrivalField(spec, meas_shifted), params.horizon),
    )


def measure(field: ArrivalField, params: MeasurementParams | None = None,
            seed=0) -> tuple[ArrivalField, NormalizedField]:
    """Synthetic satellite measurement of an arrival field.

    Returns the day-shifted arrival target (hours) and the normalized measurement.
    """
    draw = measure_detailed(field, params, seed)
    return draw.shifted_arrival, draw.measurement


# ---------------------------------------------------------------------------
# dataset assembly

@dataclass
class DatasetManifest:
    records: list[dict]
    grid: dict
    horizon: float = DEFAULT_HORIZON
    seed: int = 0
    augment_params: dict = field(default_factory=dict)
    measurement_params: dict = field(default_factory=dict)
    root: Path | None = None

    @property
    def spec(self) -> GridSpec:
        return GridSpec(**self.grid)

    def split(self, name: str) -> list[dict]:
        return [r for r in self.records if r["split"] == name]

    @property
    def split_sizes(self) -> dict:
        return {"train": len(self.split("train")), "validation": len(self.split("validation"))}

    def to_json(self) -> dict:
        return {
            "grid": self.grid, "horizon": self.horizon, "seed": self.seed,
            "augment_params": self.augment_params, "measurement_params": self.measurement_params,
            "split": self.split_sizes, "records": self.records,
        }

    def save(self, path) -> Path:
        path = Path(path)
        path.write_text(json.dumps(self.to_json(), indent=1, sort_keys=True) + "\n")
        return path

    @classmethod
    def load(cls, path) -> "DatasetManifest":
        path = Path(path)
        d = json.loads(path.read_text())
        return cls(records=d["records"], grid=d["grid"], horizon=d["horizon"], seed=d["seed"],
                   augment_params=d.get("augment_params", {}),
                   measurement_params=d.get("measurement_params", {}), root=path.parent)

    def resolve(self, rel: str) -> Path:
        return (self.root or Path(".")) / rel

    def validate(self):
        seen = {}
        for rec in self.records:
            key = (rec["arrival"], rec["measurement"])
            if key in seen and seen[key] != rec["split"]:
                raise ValueError(f"record {key} appears in both splits")
            seen[key] = rec["split"]
        spec = self.spec
        for rec in self.records:
            for k in ("arrival", "measurement"):
                f = read_farr(self.resolve(rec[k]))
                if f.spec != spec:
                    raise ValueError(f"{rec[k]}: grid {f.spec} does not match manifest {spec}")


def _validation_sims(n_sims: int, n_train: int, n_val: int) -> list[int]:
    if n_val == 0:
        return []
    n_v = max(1, int(round(n_sims * n_val / (n_train + n_val))))
    if n_train > 0:
        n_v = min(n_v, n_sims - 1)
    return sorted({(m + 1) * n_sims // n_v - 1 for m in range(n_v)})


def _record_seed(seed: int, split: str, r: int) -> int:
    code = 0 if split == "train" else 1
    return int(np.random.SeedSequence([seed, code, r]).generate_state(1, np.uint64)[0] >> 1)


def _make_sample(task):
    (sim_path, out_dir, rel_arr, rel_meas, rec_seed, aug, mp) = task
    base = read_farr(sim_path)
    aug_rng = np.random.default_rng([rec_seed, 0])
    rotation = aug_rng.uniform(*aug.rotation_range)
    half = aug.translation_box_km * 500.0
    dx, dy = aug_rng.uniform(-half, half, 2)
    arrival = augment(base, rotation, (dx, dy), aug.translation_box_km)
    shifted, meas = measure(arrival, mp, seed=[rec_seed, 1])
    write_farr(Path(out_dir) / rel_arr, normalize(shifted, mp.horizon))
    write_farr(Path(out_dir) / rel_meas, meas)
    return rotation, dx, dy


def build_dataset(sim_dir, out_dir, augment_params: AugmentParams | None = None,
                  measurement_params: MeasurementParams | None = None,
                  n_train: int = 8000, n_val: int = 2000, seed: int = 0,
                  workers: int | None = None) -> DatasetManifest:
    """Augment and measure simulations into normalized (arrival, measurement) FARR pairs.

    Whole simulations are assigned to one split so augmented copies of a
    validation fire never leak into training.
    """
    aug = augment_params or AugmentParams()
    mp = measurement_params or MeasurementParams()
    sims = sorted(Path(sim_dir).glob("*.farr"))
    if not sims:
        raise ValueError(f"no simulation rasters in {sim_dir}")
    spec = read_farr(sims[0]).spec
    aug.check_fits(spec)
    if spec.resolution > mp.sensor_resolution:
        raise ValueError("simulation resolution is coarser than the sensor")
    if n_val > 0 and n_train > 0 and len(sims) < 2:
        raise ValueError("need at least two simulations to form disjoint splits")

    val_ids = _validation_sims(len(sims), n_train, n_val)
    train_ids = [k for k in range(len(sims)) if k not in val_ids]
    plan = []
    for split, ids, n in (("train", train_ids, n_train), ("validation", val_ids, n_val)):
        if n == 0:
            continue
        if not ids or math.ceil(n / len(ids)) > aug.samples_per_sim:
            raise ValueError(f"{len(ids)} simulations x {aug.samples_per_sim} augmentations "
                             f"cannot supply {n} {split} samples")
        for r in range(n):
            sim = ids[r % len(ids)]
            plan.append((split, r, sim, r // len(ids)))

    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    tasks, records = [], []
    for split, r, sim, aug_idx in plan:
        rec_seed = _record_seed(seed, split, r)
        rel_arr = f"{split}/{r:05d}_arrival.farr"
        rel_meas = f"{split}/{r:05d}_measurement.farr"
        tasks.append((str(sims[sim]), str(out_dir), rel_arr, rel_meas, rec_seed, aug, mp))
        records.append({"arrival": rel_arr, "measurement": rel_meas, "seed": rec_seed,
                        "sim_id": sim, "sim_file": sims[sim].name, "augmentation": aug_idx,
                        "split": split})

    workers = workers or os.cpu_count() or 1
    if workers > 1:
        with ProcessPoolExecutor(workers) as pool:
            list(pool.map(_make_sample, tasks, chunksize=16))
    else:
        for t in tasks:
            _make_sample(t)

    manifest = DatasetManifest(records=records, grid=asdict(spec), horizon=mp.horizon, seed=seed,
                               augment_params=asdict(aug), measurement_params=asdict(mp),
                               root=out_dir)
    manifest.save(out_dir / "manifest.json")
    log.info("wrote %d train / %d validation pairs to %s", *manifest.split_sizes.values(), out_dir)
    return manifest
