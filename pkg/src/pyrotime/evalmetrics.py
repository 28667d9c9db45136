"""Agreement scores between predicted arrival fields and observed perimeters."""
from __future__ import annotations

import json
import re
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from .geodata import PerimeterPolygon, rasterize_perimeter
from .rastercore import ArrivalField, BurnMask, RasterValues, burn_mask, format_hhmm, write_farr

CATEGORY_NONE, CATEGORY_A, CATEGORY_B, CATEGORY_C = 0, 1, 2, 3


@dataclass(frozen=True)
class ConfusionRegions:
    A: int
    B: int
    C: int
    total_pixels: int


@dataclass(frozen=True)
class ScoreReport:
    case_id: str
    evaluation_time: float
    sc: float | None
    pod: float | None
    far: float | None
    ignition_error: int | None
    A: int
    B: int
    C: int
    total_pixels: int
    predicted_ignition: str | None = None
    reported_ignition: str | None = None

    def to_json(self) -> dict:
        return asdict(self)

    def save(self, path) -> Path:
        path = Path(path)
        path.write_text(json.dumps(self.to_json(), indent=2, sort_keys=True) + "\n")
        return path


def confusion(pred: ArrivalField, truth: BurnMask, t: float) -> ConfusionRegions:
    if pred.spec != truth.spec:
        raise ValueError("prediction and truth grids differ")
    p = burn_mask(pred, t).values
    q = truth.values
    return ConfusionRegions(int((p & q).sum()), int((~p & q).sum()), int((p & ~q).sum()), p.size)


def category_raster(pred: ArrivalField, truth: BurnMask, t: float) -> RasterValues:
    p = burn_mask(pred, t).values
    q = truth.values
    codes = np.full(p.shape, CATEGORY_NONE, dtype=np.float64)
    codes[p & q] = CATEGORY_A
    codes[~p & q] = CATEGORY_B
    codes[p & ~q] = CATEGORY_C
    return RasterValues(pred.spec, codes, "category")


def _ratio(num: int, den: int) -> float | None:
    return num / den if den else None


def scores(regions: ConfusionRegions) -> tuple[float | None, float | None, float | None]:
    """(SC, POD, FAR); a ratio with a zero denominator is None (not available)."""
    a, b, c = regions.A, regions.B, regions.C
    return _ratio(2 * a, 2 * a + b + c), _ratio(a, a + b), _ratio(c, a + c)


_HHMM = re.compile(r"^\s*(\d+):([0-5]\d)\s*$")


def parse_hhmm(text: str) -> int:
    """Minutes from ``HH:MM``; hours may exceed 23."""
    m = _HHMM.match(text)
    if not m:
        raise ValueError(f"malformed HH:MM time {text!r}")
    return int(m.group(1)) * 60 + int(m.group(2))


def ignition_error(predicted: str, reported: str) -> int:
    """Signed minutes, predicted minus reported."""
    return parse_hhmm(predicted) - parse_hhmm(reported)


def evaluate_case(pred: ArrivalField, perimeter: PerimeterPolygon, reported_ignition: str | None = None,
                  case_id: str = "case", predicted_ignition: str | None = None,
                  horizon: float = 72.0, out_dir=None) -> tuple[ScoreReport, RasterValues]:
    """Score a prediction at the perimeter's observation time.

    ``predicted_ignition`` defaults to the earliest predicted arrival.
    """
    t = perimeter.observed_time
    if not 0 <= t <= horizon:
        raise ValueError(f"perimeter time {t} h outside the {horizon} h horizon")
    truth = rasterize_perimeter(perimeter, pred.spec)
    regions = confusion(pred, truth, t)
    sc, pod, far = scores(regions)
    if predicted_ignition is None:
        burned = ~pred.background_mask
        if burned.any():
            predicted_ignition = format_hhmm(float(pred.values[burned].min()))
    err = None
    if reported_ignition is not None and predicted_ignition is not None:
        err = ignition_error(predicted_ignition, reported_ignition)
    report = ScoreReport(case_id, t, sc, pod, far, err, regions.A, regions.B, regions.C,
                         regions.total_pixels, predicted_ignition, reported_ignition)
    categories = category_raster(pred, truth, t)
    if out_dir is not None:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        report.save(out_dir / "report.json")
        write_farr(out_dir / "categories.farr", categories)
    return report, categories
