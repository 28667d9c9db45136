"""Ensembles of generator samples and their weighted pixel statistics."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import torch

from .rastercore import (
    BACKGROUND, BACKGROUND_THRESHOLD, DEFAULT_HORIZON, ArrivalField, GridSpec, NormalizedField,
    RasterValues, format_hhmm,
)


class NoFireError(ValueError):
    """Summary contains no burned pixel."""


@dataclass(frozen=True)
class Ensemble:
    spec: GridSpec
    members: np.ndarray
    weights: np.ndarray
    source: dict = field(default_factory=dict)

    def __post_init__(self):
        members = np.asarray(self.members, dtype=np.float64)
        weights = np.asarray(self.weights, dtype=np.float64)
        if members.ndim != 3 or members.shape[1:] != self.spec.shape:
            raise ValueError(f"members must have shape (K, {self.spec.ny}, {self.spec.nx})")
        if len(members) < 1 or weights.shape != (len(members),):
            raise ValueError("need at least one member and one weight per member")
        if (weights < 0).any() or abs(weights.sum() - 1.0) > 1e-9:
            raise ValueError("weights must be non-negative and sum to 1")
        object.__setattr__(self, "members", members)
        object.__setattr__(self, "weights", weights)

    def __len__(self):
        return len(self.members)


@dataclass(frozen=True)
class PosteriorSummary:
    mean: ArrivalField
    std: RasterValues
    ignition_estimate: float | None
    n_members: int
    weights: np.ndarray
    mean_normalized: np.ndarray
    std_normalized: np.ndarray

    def to_json(self) -> dict:
        return {
            "ignition_estimate_hours": self.ignition_estimate,
            "ignition_time": ignition_time(self) if self.ignition_estimate is not None else None,
            "n_members": self.n_members,
            "weight_sum": float(self.weights.sum()),
            "distinct_weights": sorted({float(w) for w in self.weights}),
        }


def sample_ensemble(generator, measurement: NormalizedField, k: int = 200, seed: int = 0,
                    latent_dim: int | None = None, batch_size: int = 50, source=None) -> Ensemble:
    """K generator draws with i.i.d. standard-normal latent vectors and weights 1/K.

    ``generator`` is a NetworkParams, a Generator module, or any callable
    ``(z, meas) -> (B, 1, ny, nx)`` tensor exposing ``latent_dim``.
    """
    if k < 1:
        raise ValueError("K must be >= 1")
    net = getattr(generator, "generator", generator)
    if latent_dim is None:
        cfg = getattr(net, "cfg", None)
        latent_dim = cfg.latent_dim if cfg is not None else net.latent_dim
    if hasattr(net, "eval"):
        net.eval()
    g = torch.Generator().manual_seed(seed)
    z = torch.randn(k, latent_dim, generator=g)
    meas = torch.tensor(np.asarray(measurement.values, dtype=np.float32))[None, None]
    out = []
    with torch.no_grad():
        for start in range(0, k, batch_size):
            zb = z[start:start + batch_size]
            out.append(net(zb, meas.expand(len(zb), -1, -1, -1))[:, 0].double().numpy())
    members = np.clip(np.concatenate(out), 0.0, 1.0)
    return Ensemble(measurement.spec, members, np.full(k, 1.0 / k), source or {})


def merge_weighted(e_high: Ensemble, e_both: Ensemble, w=(0.2, 0.8)) -> Ensemble:
    """Pool two ensembles, giving each tier a total weight."""
    if e_high.spec != e_both.spec:
        raise ValueError("ensembles live on different grids")
    w_high, w_both = (float(v) for v in w)
    if w_high < 0 or w_both < 0 or abs(w_high + w_both - 1.0) > 1e-9:
        raise ValueError(f"tier weights must be non-negative and sum to 1, got {w}")
    members = np.concatenate([e_high.members, e_both.members])
    weights = np.concatenate([e_high.weights * w_high, e_both.weights * w_both])
    return Ensemble(e_high.spec, members, weights / weights.sum(),
                    {"high": e_high.source, "both": e_both.source, "tier_weights": [w_high, w_both]})


def weighted_moments(members: np.ndarray, weights: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    mean = np.zeros(members.shape[1:])
    for w, m in zip(weights, members):
        mean += w * m
    var = np.zeros(members.shape[1:])
    for w, m in zip(weights, members):
        var += w * (m - mean) ** 2
    # unanimous pixels are exact: no rounding residue in either moment
    agree = (members == members[0]).all(axis=0)
    mean[agree] = members[0][agree]
    var[agree] = 0.0
    return mean, np.sqrt(var)


def pixel_stats(e: Ensemble, horizon: float = DEFAULT_HORIZON) -> PosteriorSummary:
    if len(e) == 0:
        raise ValueError("empty ensemble")
    mean_n, std_n = weighted_moments(e.members, e.weights)
    mean_h = np.where(mean_n >= BACKGROUND_THRESHOLD, BACKGROUND, mean_n * horizon)
    burned = np.isfinite(mean_h)
    ignition = float(mean_h[burned].min()) if burned.any() else None
    return PosteriorSummary(
        mean=ArrivalField(e.spec, mean_h),
        std=RasterValues(e.spec, std_n * horizon, "hours"),
        ignition_estimate=ignition,
        n_members=len(e),
        weights=e.weights,
        mean_normalized=mean_n,
        std_normalized=std_n,
    )


def ignition_time(summary: PosteriorSummary) -> str:
    """Ignition estimate as HH:MM from the start of the ignition day (HH may exceed 23)."""
    if summary.ignition_estimate is None:
        raise NoFireError("summary has no burned pixel")
    return format_hhmm(summary.ignition_estimate)
