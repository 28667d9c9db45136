"""Adversarial training loop, JSON-lines logging and checkpoint files.

Checkpoint layout: one JSON header line (configs, epoch, tensor table) followed
by the raw little-endian tensor payload in table order.
"""
from __future__ import annotations

import json
import logging
import math
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np
import torch

from ..rastercore import read_farr
from ..synthmeas import DatasetManifest
from .losses import critic_objective
from .networks import CriticConfig, GeneratorConfig, NetworkParams, build_networks

log = logging.getLogger(__name__)

CKPT_FORMAT = "pyrotime-checkpoint-1"


class TrainingDiverged(RuntimeError):
    pass


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 200
    batch_size: int = 16
    critic_steps: int = 5
    learning_rate: float = 1e-4
    betas: tuple[float, float] = (0.5, 0.9)
    gp_weight: float = 10.0
    seed: int = 0
    checkpoint_every: int = 10

    def __post_init__(self):
        object.__setattr__(self, "betas", tuple(float(b) for b in self.betas))
        if self.epochs < 1 or self.batch_size < 1 or self.critic_steps < 1:
            raise ValueError("epochs, batch_size and critic_steps must be >= 1")
        if self.gp_weight < 0:
            raise ValueError("gp_weight must be non-negative")


# ---------------------------------------------------------------------------
# data

class PairStore:
    """Normalized (arrival, measurement) pairs of one split, read on demand."""

    def __init__(self, manifest: DatasetManifest, split: str, preload: bool = True):
        self.manifest = manifest
        self.records = manifest.split(split)
        self._cache: dict[int, tuple[np.ndarray, np.ndarray]] = {}
        self.preload = preload
        if preload:
            for k in range(len(self.records)):
                self._cache[k] = self._read(k)

    def __len__(self):
        return len(self.records)

    def _read(self, k):
        rec = self.records[k]
        a = read_farr(self.manifest.resolve(rec["arrival"]))
        m = read_farr(self.manifest.resolve(rec["measurement"]))
        return a.values.astype(np.float32), m.values.astype(np.float32)

    def get(self, k):
        if k in self._cache:
            return self._cache[k]
        return self._read(k)

    def batch(self, idx) -> tuple[torch.Tensor, torch.Tensor]:
        pairs = [self.get(int(k)) for k in idx]
        real = torch.from_numpy(np.stack([p[0] for p in pairs])[:, None])
        meas = torch.from_numpy(np.stack([p[1] for p in pairs])[:, None])
        return real, meas


# ---------------------------------------------------------------------------
# checkpoints

def _opt_tensors(opt: torch.optim.Optimizer, prefix: str):
    sd = opt.state_dict()
    tensors = {}
    for pid, st in sorted(sd["state"].items()):
        for key, val in sorted(st.items()):
            tensors[f"{prefix}/{pid}/{key}"] = torch.as_tensor(val)
    groups = [{k: (list(v) if isinstance(v, tuple) else v) for k, v in g.items()}
              for g in sd["param_groups"]]
    return tensors, groups


def save_checkpoint(path, params: NetworkParams, epoch: int = 0, train_cfg: TrainConfig | None = None,
                    optimizers: dict | None = None) -> Path:
    path = Path(path)
    tensors: dict[str, torch.Tensor] = {}
    for name, t in params.generator.state_dict().items():
        tensors[f"generator/{name}"] = t
    for name, t in params.critic.state_dict().items():
        tensors[f"critic/{name}"] = t
    opt_groups = {}
    for key, opt in (optimizers or {}).items():
        ts, groups = _opt_tensors(opt, f"opt_{key}")
        tensors.update(ts)
        opt_groups[key] = groups
    table, chunks, offset = [], [], 0
    for name, t in tensors.items():
        arr = t.detach().cpu().numpy()
        data = arr.astype(arr.dtype.newbyteorder("<"), copy=False).tobytes()
        table.append({"name": name, "dtype": arr.dtype.str.lstrip("<>|="), "shape": list(arr.shape),
                      "offset": offset, "nbytes": len(data)})
        chunks.append(data)
        offset += len(data)
    header = {
        "format": CKPT_FORMAT, "epoch": epoch, "configs": params.config_json(),
        "train_config": asdict(train_cfg) if train_cfg else None,
        "optimizer_groups": opt_groups, "tensors": table,
    }
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "wb") as fh:
        fh.write(json.dumps(header, sort_keys=True).encode() + b"\n")
        for c in chunks:
            fh.write(c)
    return path


def load_checkpoint(path) -> tuple[NetworkParams, dict]:
    """Returns the networks and a dict with ``epoch``, ``train_config`` and raw optimizer state."""
    with open(path, "rb") as fh:
        header = json.loads(fh.readline())
        payload = fh.read()
    if header.get("format") != CKPT_FORMAT:
        raise ValueError(f"{path}: not a {CKPT_FORMAT} file")
    gcfg = GeneratorConfig(**header["configs"]["generator"])
    ccfg = CriticConfig(**header["configs"]["critic"])
    params = build_networks(gcfg, ccfg)
    tensors = {}
    for ent in header["tensors"]:
        raw = payload[ent["offset"]:ent["offset"] + ent["nbytes"]]
        arr = np.frombuffer(raw, dtype=np.dtype(ent["dtype"]).newbyteorder("<")).reshape(ent["shape"])
        tensors[ent["name"]] = torch.from_numpy(arr.astype(arr.dtype.newbyteorder("="), copy=True))
    for net, prefix in ((params.generator, "generator/"), (params.critic, "critic/")):
        sd = {k[len(prefix):]: v for k, v in tensors.items() if k.startswith(prefix)}
        net.load_state_dict(sd)
    opt_state = {}
    for key, groups in header.get("optimizer_groups", {}).items():
        prefix = f"opt_{key}/"
        state: dict[int, dict] = {}
        for name, v in tensors.items():
            if name.startswith(prefix):
                pid, field = name[len(prefix):].split("/")
                state.setdefault(int(pid), {})[field] = v
        opt_state[key] = {"state": state, "param_groups": groups}
    tc = header.get("train_config")
    return params, {"epoch": header["epoch"], "train_config": TrainConfig(**tc) if tc else None,
                    "optimizers": opt_state}


# ---------------------------------------------------------------------------
# training

def _epoch_generator(seed: int, epoch: int) -> torch.Generator:
    s = int(np.random.SeedSequence([seed, epoch]).generate_state(1, np.uint64)[0] >> 1)
    return torch.Generator().manual_seed(s)


def _check_finite(params: NetworkParams, step: int, **losses):
    for name, v in losses.items():
        v = float(v.detach()) if isinstance(v, torch.Tensor) else float(v)
        if not math.isfinite(v):
            raise TrainingDiverged(f"non-finite {name} ({v}) at training step {step}")
    for tag, net in (("generator", params.generator), ("critic", params.critic)):
        for pname, p in net.named_parameters():
            if not torch.isfinite(p).all():
                raise TrainingDiverged(f"non-finite {tag} parameter {pname} at training step {step}")


def validation_mismatch(params: NetworkParams, store: PairStore, seed: int,
                        batch_size: int = 64) -> float:
    """Mean L2 distance between generated and true arrivals over the split, with a fixed latent stream."""
    if len(store) == 0:
        return float("nan")
    g = torch.Generator().manual_seed(seed)
    params.generator.eval()
    total = 0.0
    with torch.no_grad():
        for start in range(0, len(store), batch_size):
            real, meas = store.batch(range(start, min(start + batch_size, len(store))))
            z = torch.randn(real.shape[0], params.gen_cfg.latent_dim, generator=g)
            diff = params.generator(z, meas) - real
            total += diff.flatten(1).norm(dim=1).double().sum().item()
    return total / len(store)


def make_optimizers(params: NetworkParams, cfg: TrainConfig) -> dict:
    return {
        "generator": torch.optim.Adam(params.generator.parameters(), lr=cfg.learning_rate,
                                      betas=cfg.betas),
        "critic": torch.optim.Adam(params.critic.parameters(), lr=cfg.learning_rate,
                                   betas=cfg.betas),
    }


def train(manifest: DatasetManifest, gen_cfg: GeneratorConfig, critic_cfg: CriticConfig,
          cfg: TrainConfig, out_dir=None, resume=None, on_epoch=None,
          preload: bool = True) -> tuple[NetworkParams, list[dict]]:
    """Alternate ``critic_steps`` critic updates with one generator update.

    Writes ``train_log.jsonl`` and ``checkpoint_XXXX.ckpt`` files into ``out_dir``
    when given. ``resume`` is a checkpoint path to continue from.
    """
    size = manifest.spec.nx
    if manifest.spec.ny != size or size != gen_cfg.input_size or size != critic_cfg.input_size:
        raise ValueError(f"dataset grid {manifest.spec.shape} does not match network input "
                         f"size {gen_cfg.input_size}")
    train_set = PairStore(manifest, "train", preload)
    val_set = PairStore(manifest, "validation", preload)
    if len(train_set) == 0:
        raise ValueError("manifest has no training records")
    if len(val_set) == 0:
        val_set = train_set

    start_epoch = 0
    if resume is not None:
        params, info = load_checkpoint(resume)
        if params.gen_cfg != gen_cfg or params.critic_cfg != critic_cfg:
            raise ValueError("checkpoint network configuration differs from the requested one")
        optimizers = make_optimizers(params, cfg)
        for key, opt in optimizers.items():
            opt.load_state_dict(info["optimizers"][key])
        start_epoch = info["epoch"]
    else:
        params = build_networks(gen_cfg, critic_cfg, cfg.seed)
        optimizers = make_optimizers(params, cfg)
    opt_g, opt_c = optimizers["generator"], optimizers["critic"]

    out_dir = Path(out_dir) if out_dir is not None else None
    log_path = None
    if out_dir is not None:
        out_dir.mkdir(parents=True, exist_ok=True)
        log_path = out_dir / "train_log.jsonl"
        if resume is None and log_path.exists():
            log_path.unlink()

    n = len(train_set)
    n_batches = math.ceil(n / cfg.batch_size)
    nz = gen_cfg.latent_dim
    val_seed = cfg.seed + 7919
    history = []
    for epoch in range(start_epoch, cfg.epochs):
        g = _epoch_generator(cfg.seed, epoch)
        perm = torch.randperm(n, generator=g)
        sums = {"wasserstein": 0.0, "critic_loss": 0.0, "gp": 0.0, "generator_loss": 0.0}
        n_c = n_g = 0
        params.generator.train()
        params.critic.train()
        for b in range(n_batches):
            step = epoch * n_batches + b
            real, meas = train_set.batch(perm[b * cfg.batch_size:(b + 1) * cfg.batch_size])
            bs = real.shape[0]
            z = torch.randn(bs, nz, generator=g)
            eps = torch.rand(bs, 1, 1, 1, generator=g)
            with torch.no_grad():
                fake = params.generator(z, meas)
            c_loss, w, gp = critic_objective(params.critic, real, fake, meas, cfg.gp_weight, eps)
            opt_c.zero_grad(set_to_none=True)
            c_loss.backward()
            opt_c.step()
            sums["critic_loss"] += c_loss.item()
            sums["wasserstein"] += w.item()
            sums["gp"] += gp.item()
            n_c += 1
            g_loss = torch.zeros(())
            if (step + 1) % cfg.critic_steps == 0:
                z = torch.randn(bs, nz, generator=g)
                g_loss = -params.critic(params.generator(z, meas), meas).mean()
                opt_g.zero_grad(set_to_none=True)
                g_loss.backward()
                opt_g.step()
                sums["generator_loss"] += g_loss.item()
                n_g += 1
            _check_finite(params, step, critic_loss=c_loss, generator_loss=g_loss)

        record = {
            "epoch": epoch + 1,
            "mismatch": validation_mismatch(params, val_set, val_seed),
            "wasserstein": sums["wasserstein"] / n_c,
            "critic_loss": sums["critic_loss"] / n_c,
            "gp": sums["gp"] / n_c,
            "generator_loss": sums["generator_loss"] / n_g if n_g else None,
            "critic_steps": n_c,
            "generator_steps": n_g,
        }
        history.append(record)
        log.info("epoch %d mismatch %.4f W %.4f", epoch + 1, record["mismatch"], record["wasserstein"])
        if log_path is not None:
            with open(log_path, "a") as fh:
                fh.write(json.dumps(record, sort_keys=True) + "\n")
        if out_dir is not None and ((epoch + 1) % cfg.checkpoint_every == 0 or epoch + 1 == cfg.epochs):
            save_checkpoint(out_dir / f"checkpoint_{epoch + 1:04d}.ckpt", params, epoch + 1, cfg,
                            optimizers)
        if on_epoch is not None:
            on_epoch(record)
    if out_dir is not None:
        save_checkpoint(out_dir / "final.ckpt", params, cfg.epochs, cfg, optimizers)
    return params, history
