"""Noise-prediction objective, multi-task sampling and the training loop."""

from __future__ import annotations

import logging
import math
from dataclasses import asdict, dataclass, fields
from pathlib import Path
from typing import NamedTuple

import numpy as np
import torch

from .latents import concat_latents
from .model import TaskId, ToyDenoiser
from .schedule import NoiseSchedule, add_noise

log = logging.getLogger(__name__)


class TrainingDiverged(RuntimeError):
    pass


@dataclass
class TrainConfig:
    p_seg: float = 0.5
    p_depth: float = 0.5
    lr: float = 1e-4
    steps: int = 2000
    seed: int = 0
    batch: int = 8

    def __post_init__(self):
        if min(self.p_seg, self.p_depth) < 0 or not math.isclose(self.p_seg + self.p_depth, 1.0, abs_tol=1e-9):
            raise ValueError(f"partition ({self.p_seg}, {self.p_depth}) must be non-negative and sum to 1")
        if self.steps < 0 or self.batch < 1 or self.lr < 0:
            raise ValueError("steps >= 0, batch >= 1 and lr >= 0 required")

    def write(self, path: str | Path) -> None:
        Path(path).write_text("".join(f"{k} = {v}\n" for k, v in asdict(self).items()), encoding="utf-8")

    @classmethod
    def read(cls, path: str | Path) -> "TrainConfig":
        types = {f.name: f.type for f in fields(cls)}
        values = {}
        for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), start=1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            key, sep, val = (s.strip() for s in line.partition("="))
            if not sep or key not in types:
                raise ValueError(f"{path}:{lineno}: expected one of {sorted(types)} as 'key = value'")
            values[key] = float(val) if types[key] in ("float", float) else int(val)
        return cls(**values)


class Batch(NamedTuple):
    video: torch.Tensor  # (B, T, Cv, H, W) clean video latents
    dense: torch.Tensor  # (B, T, Cc, H, W) clean dense latents
    task: torch.Tensor  # (B,) TaskId values
    prompt: torch.Tensor  # (B,) prompt classes


def sample_task(rng: np.random.Generator, cfg: TrainConfig) -> TaskId:
    return TaskId.SEGMENTATION if rng.random() < cfg.p_seg else TaskId.DEPTH


def denoising_loss(pred: torch.Tensor, eps: torch.Tensor, reduction: str = "sum") -> torch.Tensor:
    """0.5 * ||pred - eps||^2, summed over all elements (``mean`` for logging)."""
    if pred.shape != eps.shape:
        raise ValueError(f"shape mismatch: {tuple(pred.shape)} vs {tuple(eps.shape)}")
    sq = (pred - eps) ** 2
    if reduction == "sum":
        return 0.5 * sq.sum()
    if reduction == "mean":
        return 0.5 * sq.mean()
    raise ValueError(f"unknown reduction {reduction!r}")


def training_loss(z_t, t_d, c, eps, model: ToyDenoiser, reduction: str = "sum") -> torch.Tensor:
    return denoising_loss(model.denoise(z_t, t_d, c), eps, reduction)


def noised_batch(batch: Batch, schedule: NoiseSchedule, gen: torch.Generator):
    z0 = concat_latents(batch.video, batch.dense)
    B = z0.shape[0]
    t = torch.randint(1, schedule.steps + 1, (B,), generator=gen)
    eps = torch.randn(z0.shape, generator=gen, dtype=z0.dtype)
    return add_noise(z0, eps, t, schedule), t, eps


def batch_loss(model: ToyDenoiser, z_t, t, eps, batch: Batch) -> torch.Tensor:
    """Per-sample summed loss averaged over the batch."""
    t_d = model.task_time_embedding(batch.task, t)
    c = model.prompt_condition(batch.prompt)
    return training_loss(z_t, t_d, c, eps, model) / z_t.shape[0]


def train_step(
    model: ToyDenoiser,
    optimizer: torch.optim.Optimizer,
    batch: Batch,
    schedule: NoiseSchedule,
    gen: torch.Generator,
) -> float:
    """One update on every parameter, the task table included. Returns the loss before the update."""
    z_t, t, eps = noised_batch(batch, schedule, gen)
    optimizer.zero_grad(set_to_none=True)
    loss = batch_loss(model, z_t, t, eps, batch)
    if not torch.isfinite(loss):
        raise TrainingDiverged(
            f"non-finite loss {loss.item()} at t={t.tolist()} tasks={batch.task.tolist()}; "
            f"latent range [{z_t.min().item():.3g}, {z_t.max().item():.3g}]"
        )
    loss.backward()
    optimizer.step()
    return float(loss.detach())


def make_optimizer(model: ToyDenoiser, lr: float) -> torch.optim.Optimizer:
    return torch.optim.Adam(model.parameters(), lr=lr)


@dataclass
class ToyCorpus:
    video: torch.Tensor  # (N, T, C, H, W)
    seg: torch.Tensor
    depth: torch.Tensor
    prompt: torch.Tensor  # (N,)

    def __len__(self):
        return self.video.shape[0]


def draw_batch(corpus: ToyCorpus, cfg: TrainConfig, rng: np.random.Generator) -> Batch:
    idx = rng.integers(0, len(corpus), size=cfg.batch)
    tasks = [sample_task(rng, cfg) for _ in range(cfg.batch)]
    dense = torch.stack(
        [corpus.seg[i] if d == TaskId.SEGMENTATION else corpus.depth[i] for i, d in zip(idx.tolist(), tasks)]
    )
    idx_t = torch.as_tensor(idx)
    return Batch(corpus.video[idx_t], dense, torch.tensor([int(d) for d in tasks]), corpus.prompt[idx_t])


def train(
    model: ToyDenoiser, corpus: ToyCorpus, cfg: TrainConfig, schedule: NoiseSchedule, log_every: int = 0
) -> list[float]:
    """Run ``cfg.steps`` updates in place and return the per-step losses."""
    seeds = np.random.SeedSequence(cfg.seed).spawn(2)
    rng = np.random.default_rng(seeds[0])
    gen = torch.Generator().manual_seed(int(seeds[1].generate_state(1, dtype=np.uint64)[0] & (2**63 - 1)))
    opt = make_optimizer(model, cfg.lr)
    losses = []
    model.train()
    for step in range(cfg.steps):
        losses.append(train_step(model, opt, draw_batch(corpus, cfg, rng), schedule, gen))
        if log_every and (step + 1) % log_every == 0:
            log.info("step %d loss %.4f", step + 1, float(np.mean(losses[-log_every:])))
    model.eval()
    return losses
