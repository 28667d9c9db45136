"""Wasserstein objective with gradient penalty, and a finite-difference check of the
critic's input gradient."""
from __future__ import annotations

import copy
from typing import NamedTuple

import numpy as np
import torch


class Losses(NamedTuple):
    critic_loss: torch.Tensor
    generator_loss: torch.Tensor
    wasserstein: torch.Tensor
    gp: torch.Tensor


def gradient_penalty(critic, real, fake, meas, eps=None, generator=None):
    """Mean of (||grad_x d(x, meas)||_2 - 1)^2 over x = eps*real + (1-eps)*fake.

    Only the arrival argument is interpolated; the measurement is held fixed.
    """
    if eps is None:
        shape = (real.shape[0],) + (1,) * (real.dim() - 1)
        eps = torch.rand(shape, generator=generator, dtype=real.dtype)
    x = (eps * real + (1.0 - eps) * fake).detach().requires_grad_(True)
    out = critic(x, meas)
    (grad,) = torch.autograd.grad(out.sum(), x, create_graph=True)
    norms = grad.flatten(1).norm(dim=1)
    return ((norms - 1.0) ** 2).mean()


def critic_objective(critic, real, fake, meas, gp_weight=10.0, eps=None, generator=None):
    """Returns (critic_loss, wasserstein_estimate, gp_term) with ``fake`` treated as fixed."""
    fake = fake.detach()
    w = critic(real, meas).mean() - critic(fake, meas).mean()
    if gp_weight:
        gp = gradient_penalty(critic, real, fake, meas, eps, generator)
    else:
        gp = torch.zeros((), dtype=real.dtype)
    return -w + gp_weight * gp, w, gp


def wgan_losses(generator, critic, real, meas, z, gp_weight=10.0, eps=None) -> Losses:
    """Empirical Wasserstein objective on one batch.

    ``generator(z, meas)`` and ``critic(arrival, meas)`` may be modules or any
    callables on tensors with a leading batch dimension.
    """
    if real.shape[0] == 0:
        raise ValueError("empty batch")
    fake = generator(z, meas)
    d_fake = critic(fake, meas)
    w = critic(real, meas).mean() - d_fake.mean()
    if gp_weight:
        gp = gradient_penalty(critic, real, fake, meas, eps)
    else:
        gp = torch.zeros((), dtype=real.dtype)
    return Losses(-w + gp_weight * gp, -d_fake.mean(), w, gp)


def _input_gradient(critic, arrival, measurement):
    x = arrival.clone().requires_grad_(True)
    out = critic(x, measurement).sum()
    (g,) = torch.autograd.grad(out, x)
    return g


def _float64(x) -> torch.Tensor:
    if isinstance(x, torch.Tensor):
        return x.detach().double()
    return torch.from_numpy(np.array(getattr(x, "values", x), dtype=np.float64))


def gradient_check(critic, arrival, measurement, n_pixels: int = 100, step: float = 1e-4,
                   seed: int = 0, floor: float = 1e-8) -> float:
    """Max relative error between autograd and central differences of the critic
    output w.r.t. the arrival input, over ``n_pixels`` random pixels (float64)."""
    critic = copy.deepcopy(critic).double().eval()
    arrival = _float64(arrival)
    arrival = arrival.reshape(1, 1, *arrival.shape[-2:])
    measurement = _float64(measurement).reshape(arrival.shape)
    if arrival.shape[-1] > 16 or arrival.shape[-2] > 16:
        raise ValueError("gradient check probes must be at most 16x16")
    analytic = _input_gradient(critic, arrival, measurement).flatten()
    n = analytic.numel()
    rng = np.random.default_rng(seed)
    picks = rng.choice(n, size=min(n_pixels, n), replace=False)
    worst = 0.0
    with torch.no_grad():
        for p in picks:
            bump = torch.zeros(n, dtype=torch.float64)
            bump[p] = step
            bump = bump.reshape(arrival.shape)
            fd = (critic(arrival + bump, measurement) - critic(arrival - bump, measurement)).item() / (2 * step)
            a = analytic[p].item()
            denom = max(abs(a), abs(fd), floor)
            worst = max(worst, abs(a - fd) / denom)
    return worst
