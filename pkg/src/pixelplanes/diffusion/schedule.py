from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import torch

BETA_START = 1e-4
BETA_END = 2e-2


@dataclass(frozen=True)
class NoiseSchedule:
    """Variance schedule with ``alpha_bars[0] == 1`` and ``alpha_bars[t]`` for t = 1..steps."""

    betas: np.ndarray  # (steps,), betas[t-1] is beta_t
    alpha_bars: np.ndarray  # (steps + 1,)

    @property
    def steps(self) -> int:
        return len(self.betas)

    def alpha_bar(self, t, like: torch.Tensor | None = None):
        if like is None:
            return self.alpha_bars[t]
        ab = torch.as_tensor(self.alpha_bars, dtype=like.dtype, device=like.device)
        return ab[torch.as_tensor(t, dtype=torch.long, device=like.device)]


def make_schedule(steps: int = 1000, kind: str = "linear") -> NoiseSchedule:
    if steps < 1:
        raise ValueError("schedule needs at least one step")
    if kind != "linear":
        raise ValueError(f"unknown schedule kind {kind!r}")
    betas = np.linspace(BETA_START, BETA_END, steps, dtype=np.float64)
    alpha_bars = np.concatenate([[1.0], np.cumprod(1.0 - betas)])
    return NoiseSchedule(betas, alpha_bars)


def _broadcast(values: torch.Tensor, z: torch.Tensor) -> torch.Tensor:
    # per-sample scalars against (B, ...) latents
    if values.ndim == 0:
        return values
    return values.reshape(values.shape + (1,) * (z.ndim - values.ndim))


def add_noise(z0: torch.Tensor, eps: torch.Tensor, t, schedule: NoiseSchedule) -> torch.Tensor:
    """Forward process: sqrt(ab_t) * z0 + sqrt(1 - ab_t) * eps."""
    if z0.shape != eps.shape:
        raise ValueError(f"shape mismatch: {tuple(z0.shape)} vs {tuple(eps.shape)}")
    tt = torch.as_tensor(t, dtype=torch.long)
    if tt.numel() and (int(tt.min()) < 1 or int(tt.max()) > schedule.steps):
        raise ValueError(f"t must lie in 1..{schedule.steps}")
    ab = _broadcast(schedule.alpha_bar(tt, like=z0), z0)
    return ab.sqrt() * z0 + (1.0 - ab).sqrt() * eps
