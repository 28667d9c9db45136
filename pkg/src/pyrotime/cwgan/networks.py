"""Generator (U-Net with conditional instance normalization) and critic networks."""
from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np
import torch
from torch import nn

from ..rastercore import NormalizedField


@dataclass(frozen=True)
class GeneratorConfig:
    latent_dim: int = 64
    levels: int = 4
    dense_k: int = 16
    dense_n: int = 4
    down_p: int = 2
    down_q: int = 2
    input_size: int = 64
    base_channels: int = 16

    def __post_init__(self):
        if self.input_size % (self.down_p ** self.levels):
            raise ValueError(f"input_size {self.input_size} not divisible by "
                             f"{self.down_p}^{self.levels}")
        if min(self.dense_k, self.dense_n, self.latent_dim, self.base_channels) < 1:
            raise ValueError("dense_k, dense_n, latent_dim and base_channels must be >= 1")


@dataclass(frozen=True)
class CriticConfig:
    levels: int = 4
    dense_k: int = 16
    dense_n: int = 4
    down_p: int = 2
    down_q: int = 2
    input_size: int = 64
    base_channels: int = 16
    fc_widths: tuple[int, ...] = (128, 64, 1)

    def __post_init__(self):
        object.__setattr__(self, "fc_widths", tuple(int(w) for w in self.fc_widths))
        if not self.fc_widths or self.fc_widths[-1] != 1:
            raise ValueError("fc_widths must end in 1")
        if self.input_size % (self.down_p ** self.levels):
            raise ValueError(f"input_size {self.input_size} not divisible by "
                             f"{self.down_p}^{self.levels}")


def config_for_size(input_size: int, latent_dim: int = 64) -> tuple[GeneratorConfig, CriticConfig]:
    """Default depth: 2 levels for <= 16 px, 4 for <= 64 px, 6 above."""
    levels = 2 if input_size <= 16 else 4 if input_size <= 64 else 6
    return (GeneratorConfig(latent_dim=latent_dim, levels=levels, input_size=input_size),
            CriticConfig(levels=levels, input_size=input_size))


class CIN(nn.Module):
    """Instance norm whose per-channel scale and shift are affine in the latent vector."""

    def __init__(self, channels: int, latent_dim: int):
        super().__init__()
        self.norm = nn.InstanceNorm2d(channels, affine=False)
        self.affine = nn.Linear(latent_dim, 2 * channels)

    def forward(self, x, z):
        gamma, beta = self.affine(z).chunk(2, dim=1)
        return self.norm(x) * (1.0 + gamma[:, :, None, None]) + beta[:, :, None, None]


class SubBlock(nn.Module):
    def __init__(self, c_in: int, c_out: int, latent_dim: int | None):
        super().__init__()
        self.cin = CIN(c_in, latent_dim) if latent_dim else None
        self.act = nn.ELU()
        self.conv = nn.Conv2d(c_in, c_out, 3, padding=1)

    def forward(self, x, z=None):
        if self.cin is not None:
            x = self.cin(x, z)
        return self.conv(self.act(x))


class DenseBlock(nn.Module):
    """DB(k, n): n densely connected sub-blocks; the first n-1 emit k features each,
    the last maps the concatenated stack back to the input width."""

    def __init__(self, channels: int, k: int, n: int, latent_dim: int | None = None):
        super().__init__()
        self.subs = nn.ModuleList()
        c = channels
        for m in range(n):
            last = m == n - 1
            self.subs.append(SubBlock(c, channels if last else k, latent_dim))
            c += k
        self.n = n

    def forward(self, x, z=None):
        feats = [x]
        y = x
        for m, sub in enumerate(self.subs):
            y = sub(torch.cat(feats, dim=1), z)
            if m < self.n - 1:
                feats.append(y)
        return y


class Down(nn.Module):
    """Down(p, q, k, n): dense block, widen channels by q, pool by p."""

    def __init__(self, channels, p, q, k, n, latent_dim=None):
        super().__init__()
        self.dense = DenseBlock(channels, k, n, latent_dim)
        self.conv = nn.Conv2d(channels, channels * q, 3, padding=1)
        self.pool = nn.AvgPool2d(p)

    def forward(self, x, z=None):
        return self.pool(self.conv(self.dense(x, z)))


class Up(nn.Module):
    """Up(p, q, k, n): dense block, refine by p, narrow channels by q."""

    def __init__(self, channels, p, q, k, n, latent_dim=None):
        super().__init__()
        self.dense = DenseBlock(channels, k, n, latent_dim)
        self.up = nn.Upsample(scale_factor=p, mode="nearest")
        self.conv = nn.Conv2d(channels, channels // q, 3, padding=1)

    def forward(self, x, z=None):
        return self.conv(self.up(self.dense(x, z)))


class Generator(nn.Module):
    def __init__(self, cfg: GeneratorConfig):
        super().__init__()
        self.cfg = cfg
        c = cfg.base_channels
        nz = cfg.latent_dim
        self.stem = nn.Conv2d(1, c, 3, padding=1)
        self.downs = nn.ModuleList()
        widths = []
        for _ in range(cfg.levels):
            widths.append(c)
            self.downs.append(Down(c, cfg.down_p, cfg.down_q, cfg.dense_k, cfg.dense_n, nz))
            c *= cfg.down_q
        self.bottleneck = DenseBlock(c, cfg.dense_k, cfg.dense_n, nz)
        self.ups = nn.ModuleList()
        self.merges = nn.ModuleList()
        for w in reversed(widths):
            self.ups.append(Up(c, cfg.down_p, cfg.down_q, cfg.dense_k, cfg.dense_n, nz))
            c //= cfg.down_q
            self.merges.append(nn.Conv2d(c + w, w, 1))
            c = w
        self.head = nn.Sequential(nn.ELU(), nn.Conv2d(c, 1, 3, padding=1))

    def forward(self, z, meas):
        x = self.stem(meas)
        skips = []
        for down in self.downs:
            skips.append(x)
            x = down(x, z)
        x = self.bottleneck(x, z)
        for up, merge, skip in zip(self.ups, self.merges, reversed(skips)):
            x = merge(torch.cat([up(x, z), skip], dim=1))
        return torch.sigmoid(self.head(x))


class Critic(nn.Module):
    def __init__(self, cfg: CriticConfig):
        super().__init__()
        self.cfg = cfg
        c = cfg.base_channels
        self.stem = nn.Conv2d(2, c, 3, padding=1)
        self.downs = nn.ModuleList()
        for _ in range(cfg.levels):
            self.downs.append(Down(c, cfg.down_p, cfg.down_q, cfg.dense_k, cfg.dense_n))
            c *= cfg.down_q
        self.dense = DenseBlock(c, cfg.dense_k, cfg.dense_n)
        side = cfg.input_size // cfg.down_p ** cfg.levels
        layers: list[nn.Module] = [nn.Flatten()]
        width = c * side * side
        for m, w in enumerate(cfg.fc_widths):
            if m:
                layers.append(nn.ELU())
            layers.append(nn.Linear(width, w))
            width = w
        self.fc = nn.Sequential(*layers)

    def forward(self, arrival, meas):
        x = self.stem(torch.cat([arrival, meas], dim=1))
        for down in self.downs:
            x = down(x)
        return self.fc(self.dense(x)).squeeze(1)


@dataclass
class NetworkParams:
    gen_cfg: GeneratorConfig
    critic_cfg: CriticConfig
    generator: Generator = field(repr=False)
    critic: Critic = field(repr=False)

    def config_json(self) -> dict:
        return {"generator": asdict(self.gen_cfg), "critic": asdict(self.critic_cfg)}

    def all_finite(self) -> bool:
        return all(torch.isfinite(p).all() for m in (self.generator, self.critic)
                   for p in m.parameters())


def build_networks(gen_cfg: GeneratorConfig, critic_cfg: CriticConfig, seed: int = 0) -> NetworkParams:
    if gen_cfg.input_size != critic_cfg.input_size:
        raise ValueError("generator and critic input sizes differ")
    with torch.random.fork_rng(devices=[]):
        torch.manual_seed(seed)
        gen = Generator(gen_cfg)
        critic = Critic(critic_cfg)
    return NetworkParams(gen_cfg, critic_cfg, gen, critic)


def _as_batch(x, size: int, name: str) -> torch.Tensor:
    if isinstance(x, NormalizedField):
        x = x.values
    t = x.float() if isinstance(x, torch.Tensor) else torch.from_numpy(np.array(x, dtype=np.float32))
    if t.dim() == 2:
        t = t[None, None]
    elif t.dim() == 3:
        t = t[:, None]
    if t.shape[-2:] != (size, size):
        raise ValueError(f"{name} has spatial shape {tuple(t.shape[-2:])}, expected {size}x{size}")
    return t


def generator_forward(params: NetworkParams, z, measurement):
    """Generator sample for latent ``z`` and a measurement. Returns a NormalizedField for field input."""
    size = params.gen_cfg.input_size
    meas = _as_batch(measurement, size, "measurement")
    zt = torch.as_tensor(np.asarray(z) if not isinstance(z, torch.Tensor) else z, dtype=torch.float32)
    if zt.dim() == 1:
        zt = zt[None]
    if zt.shape[-1] != params.gen_cfg.latent_dim:
        raise ValueError(f"latent vector has dimension {zt.shape[-1]}, "
                         f"expected {params.gen_cfg.latent_dim}")
    if zt.shape[0] != meas.shape[0]:
        meas = meas.expand(zt.shape[0], -1, -1, -1)
    params.generator.eval()
    with torch.no_grad():
        out = params.generator(zt, meas)
    if isinstance(measurement, NormalizedField):
        return NormalizedField(measurement.spec, out[0, 0].double().numpy())
    return out


def critic_forward(params: NetworkParams, arrival, measurement):
    size = params.critic_cfg.input_size
    a = _as_batch(arrival, size, "arrival")
    m = _as_batch(measurement, size, "measurement")
    if a.shape[0] != m.shape[0]:
        raise ValueError("arrival and measurement batch sizes differ")
    with torch.no_grad():
        out = params.critic(a, m)
    if isinstance(arrival, NormalizedField):
        return float(out[0])
    return out
