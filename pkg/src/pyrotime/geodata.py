"""Active-fire CSV ingestion, detection gridding, and perimeter rasterization."""
from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from .rastercore import (
    BACKGROUND, DEFAULT_HORIZON, ArrivalField, BurnMask, GridSpec, NormalizedField,
    OutOfDomainError, latlon_to_fractional, latlon_to_pixel, normalize,
    pixel_to_latlon,
)

AF_COLUMNS = ("lat", "lon", "time_utc", "confidence")
CONFIDENCE_LEVELS = ("low", "nominal", "high")
TIER_SETS = {"high": frozenset({"high"}), "high+nominal": frozenset({"high", "nominal"})}


class SchemaError(ValueError):
    pass


class AfParseError(ValueError):
    def __init__(self, problems: list[tuple[int, str]]):
        self.problems = problems
        lines = "; ".join(f"line {n}: {msg}" for n, msg in problems)
        super().__init__(f"{len(problems)} malformed row(s): {lines}")


@dataclass(frozen=True)
class AfDetection:
    lat: float
    lon: float
    time_utc: datetime
    confidence: str


def parse_timestamp(text: str) -> datetime:
    """ISO-8601 timestamp; a trailing Z or missing offset means UTC."""
    text = text.strip()
    if text.endswith(("Z", "z")):
        text = text[:-1] + "+00:00"
    ts = datetime.fromisoformat(text)
    if ts.tzinfo is None:
        ts = ts.replace(tzinfo=timezone.utc)
    return ts.astimezone(timezone.utc)


def _parse_row(row: dict) -> AfDetection:
    lat = float(row["lat"])
    lon = float(row["lon"])
    if not (math.isfinite(lat) and math.isfinite(lon)) or abs(lat) > 90 or abs(lon) > 180:
        raise ValueError(f"invalid coordinates ({row['lat']}, {row['lon']})")
    conf = row["confidence"].strip().lower()
    if conf not in CONFIDENCE_LEVELS:
        raise ValueError(f"unknown confidence {row['confidence']!r}")
    return AfDetection(lat, lon, parse_timestamp(row["time_utc"]), conf)


def parse_af_csv(path) -> list[AfDetection]:
    """Read a ``lat,lon,time_utc,confidence`` CSV extract."""
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None:
            return []
        header = [h.strip().lower() for h in reader.fieldnames]
        missing = [c for c in AF_COLUMNS if c not in header]
        if missing:
            raise SchemaError(f"{path}: missing column(s) {missing}; expected {list(AF_COLUMNS)}")
        reader.fieldnames = header
        out, problems = [], []
        for row in reader:
            try:
                out.append(_parse_row(row))
            except (TypeError, ValueError) as exc:
                problems.append((reader.line_num, str(exc)))
    if problems:
        raise AfParseError(problems)
    return out


@dataclass
class GriddingStats:
    used: int = 0
    outside_domain: int = 0
    outside_window: int = 0
    wrong_tier: int = 0


def grid_detections(detections, spec: GridSpec, ignition_day_start: datetime,
                    tiers=("high",), window: float = 48.0, horizon: float = DEFAULT_HORIZON,
                    stats: GriddingStats | None = None) -> NormalizedField:
    """Earliest detection time per pixel, hours since ``ignition_day_start``, normalized."""
    if window > horizon:
        raise ValueError(f"window {window} h exceeds the {horizon} h horizon")
    tiers = frozenset(t.lower() for t in tiers)
    stats = stats if stats is not None else GriddingStats()
    if ignition_day_start.tzinfo is None:
        ignition_day_start = ignition_day_start.replace(tzinfo=timezone.utc)
    hours = np.full(spec.shape, BACKGROUND)
    for det in detections:
        if det.confidence not in tiers:
            stats.wrong_tier += 1
            continue
        t = (det.time_utc - ignition_day_start).total_seconds() / 3600.0
        if not 0.0 <= t <= window:
            stats.outside_window += 1
            continue
        try:
            i, j = latlon_to_pixel(spec, det.lat, det.lon)
        except OutOfDomainError:
            stats.outside_domain += 1
            continue
        if t < hours[j, i]:
            hours[j, i] = t
        stats.used += 1
    return normalize(ArrivalField(spec, hours), horizon)


# ---------------------------------------------------------------------------
# perimeters

@dataclass(frozen=True)
class PerimeterPolygon:
    """Rings of (lat, lon) vertices; first vertex repeated at the end."""

    rings: tuple[tuple[tuple[float, float], ...], ...]
    observed_time: float

    def __post_init__(self):
        rings = tuple(tuple((float(a), float(b)) for a, b in ring) for ring in self.rings)
        if not rings:
            raise ValueError("polygon has no rings")
        for ring in rings:
            if len(ring) < 4 or ring[0] != ring[-1]:
                raise ValueError("each ring must be closed (first vertex repeated last)")
            if len(set(ring[:-1])) < 3:
                raise ValueError("each ring needs at least 3 distinct vertices")
        object.__setattr__(self, "rings", rings)


def load_perimeter(path) -> PerimeterPolygon:
    """Polygon or MultiPolygon GeoJSON with an ``observed_time_hours`` property."""
    doc = json.loads(Path(path).read_text())
    feats = doc["features"] if doc.get("type") == "FeatureCollection" else [doc]
    rings, observed = [], None
    for feat in feats:
        props = feat.get("properties") or {}
        if "observed_time_hours" in props:
            observed = float(props["observed_time_hours"])
        geom = feat.get("geometry", feat)
        if geom["type"] == "Polygon":
            polys = [geom["coordinates"]]
        elif geom["type"] == "MultiPolygon":
            polys = geom["coordinates"]
        else:
            raise ValueError(f"{path}: unsupported geometry {geom['type']}")
        for poly in polys:
            for ring in poly:
                rings.append(tuple((lat, lon) for lon, lat in ring))
    if observed is None:
        raise ValueError(f"{path}: missing observed_time_hours property")
    return PerimeterPolygon(tuple(rings), observed)


def perimeter_to_geojson(poly: PerimeterPolygon) -> dict:
    return {
        "type": "Feature",
        "properties": {"observed_time_hours": poly.observed_time},
        "geometry": {"type": "Polygon",
                     "coordinates": [[[lon, lat] for lat, lon in ring] for ring in poly.rings]},
    }


def _on_segment(px, py, x0, y0, x1, y1, tol):
    dx, dy = x1 - x0, y1 - y0
    cross = (px - x0) * dy - (py - y0) * dx
    length = math.hypot(dx, dy)
    near_line = np.abs(cross) <= tol * max(length, 1e-300)
    within = ((px - x0) * dx + (py - y0) * dy >= -tol) & ((px - x1) * dx + (py - y1) * dy <= tol)
    return near_line & within


def points_in_rings(px: np.ndarray, py: np.ndarray, rings, edge_tol: float = 1e-9) -> np.ndarray:
    """Even-odd containment over all rings; points on an edge count as inside."""
    inside = np.zeros(px.shape, dtype=bool)
    on_edge = np.zeros(px.shape, dtype=bool)
    for ring in rings:
        for (x0, y0), (x1, y1) in zip(ring[:-1], ring[1:]):
            on_edge |= _on_segment(px, py, x0, y0, x1, y1, edge_tol)
            if y0 == y1:
                continue
            crosses = (y0 > py) != (y1 > py)
            x_at = x0 + (py - y0) * (x1 - x0) / (y1 - y0)
            inside ^= crosses & (px < x_at)
    return inside | on_edge


def rasterize_perimeter(poly: PerimeterPolygon, spec: GridSpec) -> BurnMask:
    """Pixels whose centre lies inside the polygon, in grid index space."""
    rings = []
    for ring in poly.rings:
        lat = np.array([p[0] for p in ring])
        lon = np.array([p[1] for p in ring])
        fi, fj = latlon_to_fractional(spec, lat, lon)
        rings.append(list(zip(fi.tolist(), fj.tolist())))
    all_i = np.concatenate([[p[0] for p in r] for r in rings])
    all_j = np.concatenate([[p[1] for p in r] for r in rings])
    if all_i.max() < -0.5 or all_i.min() > spec.nx - 0.5 or all_j.max() < -0.5 or all_j.min() > spec.ny - 0.5:
        raise ValueError("perimeter lies entirely outside the grid")
    jj, ii = np.mgrid[0:spec.ny, 0:spec.nx]
    return BurnMask(spec, points_in_rings(ii.astype(float), jj.astype(float), rings))


def square_polygon(spec: GridSpec, i0: float, j0: float, i1: float, j1: float,
                   observed_time: float = 24.0) -> PerimeterPolygon:
    """Axis-aligned rectangle between fractional pixel coordinates, as lat/lon."""
    corners = [(i0, j0), (i1, j0), (i1, j1), (i0, j1), (i0, j0)]
    ring = tuple(pixel_to_latlon(spec, i, j) for i, j in corners)
    return PerimeterPolygon((ring,), observed_time)
