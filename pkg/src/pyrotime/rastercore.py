"""Grids, arrival-time rasters, normalization, resampling and the FARR file format.

Array convention: ``values[j, i]`` where ``i`` is the column index (west to
east) and ``j`` the row index (north to south, row 0 is the northern edge).
The grid origin (lat/lon) sits at the center of pixel ``(nx // 2, ny // 2)``.

Never-burned pixels carry ``BACKGROUND`` (+inf) in memory. On disk they are
written as the header's ``background`` value (the horizon for hour rasters,
1.0 for normalized rasters).
"""
from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

log = logging.getLogger(__name__)

BACKGROUND = math.inf
DEFAULT_HORIZON = 72.0
BACKGROUND_THRESHOLD = 1.0 - 1e-6

M_PER_DEG_LAT = 111_132.95
M_PER_DEG_LON_EQUATOR = 111_320.0

FARR_ORIENTATION = "row-major, north row first"


class OutOfDomainError(ValueError):
    """A geographic coordinate falls outside the grid."""


@dataclass(frozen=True)
class GridSpec:
    nx: int
    ny: int
    resolution: float = 60.0
    origin_lat: float = 0.0
    origin_lon: float = 0.0

    def __post_init__(self):
        if self.nx < 8 or self.ny < 8:
            raise ValueError(f"grid must be at least 8x8, got {self.nx}x{self.ny}")
        if not self.resolution > 0:
            raise ValueError(f"resolution must be positive, got {self.resolution}")
        if not abs(self.origin_lat) < 85.0:
            raise ValueError(f"|origin_lat| must be < 85, got {self.origin_lat}")

    @property
    def shape(self) -> tuple[int, int]:
        return (self.ny, self.nx)

    @property
    def domain_extent(self) -> tuple[float, float]:
        """(east-west, north-south) extent in meters."""
        return (self.nx * self.resolution, self.ny * self.resolution)

    @property
    def center(self) -> tuple[int, int]:
        return (self.nx // 2, self.ny // 2)

    def with_shape(self, nx: int, ny: int, resolution: float | None = None) -> "GridSpec":
        return GridSpec(nx, ny, self.resolution if resolution is None else resolution,
                        self.origin_lat, self.origin_lon)

    def pixel_offsets(self) -> tuple[np.ndarray, np.ndarray]:
        """East and north offsets (m) of every pixel center from the origin, shape (ny, nx)."""
        i = (np.arange(self.nx) - self.nx // 2) * self.resolution
        j = (self.ny // 2 - np.arange(self.ny)) * self.resolution
        return np.meshgrid(i, j)


def _frozen(values: np.ndarray, dtype) -> np.ndarray:
    arr = np.array(values, dtype=dtype, copy=True)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class ArrivalField:
    """Fire arrival times in hours since the start of the ignition day."""

    spec: GridSpec
    values: np.ndarray

    def __post_init__(self):
        vals = _frozen(self.values, np.float64)
        if vals.shape != self.spec.shape:
            raise ValueError(f"values shape {vals.shape} does not match grid {self.spec.shape}")
        valid = ~np.isposinf(vals)
        if np.isnan(vals).any() or (vals[valid] < 0).any() or np.isneginf(vals).any():
            raise ValueError("arrival values must be finite and non-negative or background")
        object.__setattr__(self, "values", vals)

    @property
    def background_mask(self) -> np.ndarray:
        return np.isposinf(self.values)

    @classmethod
    def background_like(cls, spec: GridSpec) -> "ArrivalField":
        return cls(spec, np.full(spec.shape, BACKGROUND))


@dataclass(frozen=True)
class NormalizedField:
    """Arrival times divided by the horizon; background is exactly 1.0."""

    spec: GridSpec
    values: np.ndarray

    def __post_init__(self):
        vals = _frozen(self.values, np.float64)
        if vals.shape != self.spec.shape:
            raise ValueError(f"values shape {vals.shape} does not match grid {self.spec.shape}")
        if not np.isfinite(vals).all() or vals.min(initial=0.0) < 0 or vals.max(initial=0.0) > 1:
            raise ValueError("normalized values must lie in [0, 1]")
        object.__setattr__(self, "values", vals)


@dataclass(frozen=True)
class BurnMask:
    spec: GridSpec
    values: np.ndarray

    def __post_init__(self):
        vals = _frozen(self.values, bool)
        if vals.shape != self.spec.shape:
            raise ValueError(f"mask shape {vals.shape} does not match grid {self.spec.shape}")
        object.__setattr__(self, "values", vals)

    @property
    def count(self) -> int:
        return int(self.values.sum())


@dataclass
class ClampCounter:
    """Tally of arrival values clamped during normalization."""

    clamped: int = 0
    calls: int = field(default=0, repr=False)


CLAMPS = ClampCounter()


# ---------------------------------------------------------------------------
# normalization

def normalize_array(values: np.ndarray, horizon: float = DEFAULT_HORIZON) -> np.ndarray:
    if not horizon > 0:
        raise ValueError(f"horizon must be positive, got {horizon}")
    values = np.asarray(values, dtype=np.float64)
    out = values / horizon
    bg = np.isposinf(values)
    over = (out > 1.0) & ~bg
    n_over = int(over.sum())
    CLAMPS.calls += 1
    if n_over:
        CLAMPS.clamped += n_over
        log.warning("clamped %d arrival values above the %.1f h horizon", n_over, horizon)
    out[over] = 1.0
    out[bg] = 1.0
    return out


def denormalize_array(values: np.ndarray, horizon: float = DEFAULT_HORIZON) -> np.ndarray:
    if not horizon > 0:
        raise ValueError(f"horizon must be positive, got {horizon}")
    values = np.asarray(values, dtype=np.float64)
    if not np.isfinite(values).all() or (values < 0).any() or (values > 1).any():
        raise ValueError("normalized values must lie in [0, 1]")
    out = values * horizon
    out[values >= BACKGROUND_THRESHOLD] = BACKGROUND
    return out


def normalize(field: ArrivalField, horizon: float = DEFAULT_HORIZON) -> NormalizedField:
    return NormalizedField(field.spec, normalize_array(field.values, horizon))


def denormalize(field: NormalizedField, horizon: float = DEFAULT_HORIZON) -> ArrivalField:
    return ArrivalField(field.spec, denormalize_array(field.values, horizon))


# ---------------------------------------------------------------------------
# resampling and cropping

def nearest_indices(n_src: int, src_res: float, n_tgt: int, tgt_res: float) -> np.ndarray:
    """Source index whose center is nearest each target center; ties go to the lower index.

    Both grids share their low edge.
    """
    k = np.arange(n_tgt, dtype=np.float64)
    # target center expressed in source-center coordinates
    pos = ((2.0 * k + 1.0) * tgt_res - src_res) / (2.0 * src_res)
    idx = np.ceil(pos - 0.5 - 1e-9).astype(np.int64)
    return np.clip(idx, 0, n_src - 1)


def resampled_shape(shape: tuple[int, int], src_res: float, tgt_res: float) -> tuple[int, int]:
    ratio = src_res / tgt_res
    return tuple(max(1, int(round(n * ratio))) for n in shape)


def resample_array(values: np.ndarray, src_res: float, tgt_res: float,
                   shape: tuple[int, int] | None = None) -> np.ndarray:
    if not (src_res > 0 and tgt_res > 0):
        raise ValueError("resolutions must be positive")
    values = np.asarray(values)
    if shape is None:
        shape = resampled_shape(values.shape, src_res, tgt_res)
    for n_src, n_tgt in zip(values.shape, shape):
        if abs(n_src * src_res - n_tgt * tgt_res) >= max(src_res, tgt_res):
            raise ValueError(
                f"footprint mismatch: {values.shape} at {src_res} m vs {shape} at {tgt_res} m")
    rows = nearest_indices(values.shape[0], src_res, shape[0], tgt_res)
    cols = nearest_indices(values.shape[1], src_res, shape[1], tgt_res)
    return values[np.ix_(rows, cols)]


def resample_nearest(field, target_resolution: float, shape: tuple[int, int] | None = None):
    """Nearest-neighbour resample of any field type onto a grid of the same footprint.

    Target grids smaller than 8 pixels cannot be represented as a GridSpec;
    use :func:`resample_array` for those.
    """
    vals = resample_array(field.values, field.spec.resolution, target_resolution, shape)
    ny, nx = vals.shape
    return type(field)(field.spec.with_shape(nx, ny, target_resolution), vals)


def crop_offsets(n_src: int, n_new: int) -> int:
    """Start index of the kept window; the centre pixel ``n // 2`` stays the centre pixel,
    so crops compose exactly and the grid origin is unchanged."""
    if n_new > n_src:
        raise ValueError(f"cannot crop {n_src} pixels to {n_new}")
    return n_src // 2 - n_new // 2


def crop_center(field, new_nx: int, new_ny: int):
    ny, nx = field.spec.shape
    oi = crop_offsets(nx, new_nx)
    oj = crop_offsets(ny, new_ny)
    vals = field.values[oj:oj + new_ny, oi:oi + new_nx]
    return type(field)(field.spec.with_shape(new_nx, new_ny), vals)


def burn_mask(field: ArrivalField, t: float) -> BurnMask:
    if t < 0:
        raise ValueError(f"evaluation time must be non-negative, got {t}")
    return BurnMask(field.spec, field.values <= t)


# ---------------------------------------------------------------------------
# geolocation (local equirectangular tangent plane at the origin)

def _m_per_deg_lon(lat: float) -> float:
    return M_PER_DEG_LON_EQUATOR * math.cos(math.radians(lat))


def pixel_to_latlon(spec: GridSpec, i, j):
    east = (np.asarray(i, dtype=np.float64) - spec.nx // 2) * spec.resolution
    north = (spec.ny // 2 - np.asarray(j, dtype=np.float64)) * spec.resolution
    lat = spec.origin_lat + north / M_PER_DEG_LAT
    lon = spec.origin_lon + east / _m_per_deg_lon(spec.origin_lat)
    if lat.ndim == 0:
        return float(lat), float(lon)
    return lat, lon


def latlon_to_fractional(spec: GridSpec, lat, lon):
    east = (np.asarray(lon, dtype=np.float64) - spec.origin_lon) * _m_per_deg_lon(spec.origin_lat)
    north = (np.asarray(lat, dtype=np.float64) - spec.origin_lat) * M_PER_DEG_LAT
    return east / spec.resolution + spec.nx // 2, spec.ny // 2 - north / spec.resolution


def latlon_to_pixel(spec: GridSpec, lat: float, lon: float) -> tuple[int, int]:
    fi, fj = latlon_to_fractional(spec, lat, lon)
    i = int(math.floor(float(fi) + 0.5))
    j = int(math.floor(float(fj) + 0.5))
    if not (0 <= i < spec.nx and 0 <= j < spec.ny):
        raise OutOfDomainError(f"({lat}, {lon}) lies outside the {spec.nx}x{spec.ny} grid")
    return i, j


# ---------------------------------------------------------------------------
# FARR files

def write_farr(path, field, units: str | None = None, horizon: float = DEFAULT_HORIZON) -> Path:
    """Write a field as FARR: one JSON header line then float32 LE values, north row first."""
    path = Path(path)
    spec = field.spec
    if isinstance(field, ArrivalField):
        units = units or "hours"
        background = float(horizon)
        vals = np.where(field.background_mask, background, field.values)
    elif isinstance(field, NormalizedField):
        units = units or "normalized"
        background = 1.0
        vals = field.values
    elif isinstance(field, BurnMask):
        units = units or "mask"
        background = 0.0
        vals = field.values.astype(np.float64)
    else:
        units = units or getattr(field, "units", "value")
        background = 0.0 if units == "category" else float(horizon)
        vals = np.asarray(field.values, dtype=np.float64)
        vals = np.where(np.isposinf(vals), background, vals)
    header = {
        "nx": spec.nx, "ny": spec.ny, "resolution_m": spec.resolution,
        "origin_lat": spec.origin_lat, "origin_lon": spec.origin_lon,
        "units": units, "background": background, "orientation": FARR_ORIENTATION,
    }
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "wb") as fh:
        fh.write(json.dumps(header, sort_keys=True).encode() + b"\n")
        fh.write(np.ascontiguousarray(vals, dtype="<f4").tobytes())
    return path


def read_farr_raw(path) -> tuple[dict, np.ndarray]:
    with open(path, "rb") as fh:
        header = json.loads(fh.readline())
        payload = fh.read()
    missing = {"nx", "ny", "resolution_m", "origin_lat", "origin_lon", "units", "background"} - set(header)
    if missing:
        raise ValueError(f"{path}: FARR header missing {sorted(missing)}")
    n = header["nx"] * header["ny"]
    if len(payload) != 4 * n:
        raise ValueError(f"{path}: expected {4 * n} payload bytes, got {len(payload)}")
    vals = np.frombuffer(payload, dtype="<f4").astype(np.float64).reshape(header["ny"], header["nx"])
    return header, vals


def read_farr(path):
    """Read a FARR file into the field type its ``units`` imply."""
    header, vals = read_farr_raw(path)
    spec = GridSpec(header["nx"], header["ny"], header["resolution_m"],
                    header["origin_lat"], header["origin_lon"])
    units = header["units"]
    if units == "normalized":
        return NormalizedField(spec, vals)
    if units == "mask":
        return BurnMask(spec, vals != 0)
    if units == "hours":
        vals = np.where(vals >= header["background"], BACKGROUND, vals)
        return ArrivalField(spec, vals)
    return RasterValues(spec, vals, units)


@dataclass(frozen=True)
class RasterValues:
    """Generic per-pixel scalar raster (std maps, category codes)."""

    spec: GridSpec
    values: np.ndarray
    units: str = "value"

    def __post_init__(self):
        vals = _frozen(self.values, np.float64)
        if vals.shape != self.spec.shape:
            raise ValueError(f"values shape {vals.shape} does not match grid {self.spec.shape}")
        object.__setattr__(self, "values", vals)


def format_hhmm(hours: float) -> str:
    """Hours as ``HH:MM`` rounded to the nearest minute; HH may exceed 23."""
    minutes = int(math.floor(hours * 60.0 + 0.5))
    return f"{minutes // 60:02d}:{minutes % 60:02d}"
