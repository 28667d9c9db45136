"""PNG heatmaps of FARR rasters (headless matplotlib)."""
from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402
from matplotlib.colors import ListedColormap  # noqa: E402
from matplotlib.patches import Patch  # noqa: E402

from .rastercore import DEFAULT_HORIZON, NormalizedField, denormalize, read_farr  # noqa: E402

CATEGORY_COLORS = ["white", "0.6", "tab:blue", "tab:red"]
CATEGORY_LABELS = ["none", "A: both burned", "B: perimeter only", "C: prediction only"]


def _extent_km(spec):
    half_x = spec.nx * spec.resolution / 2000.0
    half_y = spec.ny * spec.resolution / 2000.0
    return (-half_x, half_x, -half_y, half_y)


def plot_field(path, out_png, title: str | None = None, horizon: float = DEFAULT_HORIZON) -> Path:
    """Arrival times (or spreads) in hours; background pixels are left blank."""
    field = read_farr(path)
    if isinstance(field, NormalizedField):
        field = denormalize(field, horizon)
    values = np.ma.masked_invalid(np.where(np.isfinite(field.values), field.values, np.nan))
    fig, ax = plt.subplots(figsize=(6, 5))
    im = ax.imshow(values, origin="upper", extent=_extent_km(field.spec), cmap="inferno_r")
    fig.colorbar(im, ax=ax, label="hours")
    ax.set_xlabel("east (km)")
    ax.set_ylabel("north (km)")
    ax.set_title(title or Path(path).stem)
    return _save(fig, out_png)


def plot_category(path, out_png) -> Path:
    raster = read_farr(path)
    fig, ax = plt.subplots(figsize=(6, 5))
    ax.imshow(raster.values, origin="upper", extent=_extent_km(raster.spec),
              cmap=ListedColormap(CATEGORY_COLORS), vmin=-0.5, vmax=3.5, interpolation="nearest")
    handles = [Patch(facecolor=c, edgecolor="k", label=lab)
               for c, lab in zip(CATEGORY_COLORS[1:], CATEGORY_LABELS[1:])]
    ax.legend(handles=handles, loc="lower right", fontsize=8)
    ax.set_xlabel("east (km)")
    ax.set_ylabel("north (km)")
    ax.set_title("agreement categories")
    return _save(fig, out_png)


def _save(fig, out_png) -> Path:
    out_png = Path(out_png)
    out_png.parent.mkdir(parents=True, exist_ok=True)
    fig.tight_layout()
    fig.savefig(out_png, dpi=100)
    plt.close(fig)
    return out_png
