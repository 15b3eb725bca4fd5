from __future__ import annotations

from typing import Callable

import numpy as np
import torch

from .latents import split_latents
from .model import TaskId, ToyDenoiser
from .schedule import NoiseSchedule

DEFAULT_STEPS = 50

EpsFn = Callable[[torch.Tensor, int], torch.Tensor]


def sampling_timesteps(steps: int, schedule: NoiseSchedule) -> list[int]:
    """Descending, evenly spaced steps from T_max; fewer if steps > T_max."""
    if steps < 1:
        raise ValueError("steps must be >= 1")
    ts = np.round(np.linspace(schedule.steps, 1, steps)).astype(int)
    out: list[int] = []
    for t in ts.tolist():
        if not out or t < out[-1]:
            out.append(t)
    return out


def ddim_sample(eps_fn: EpsFn, z_T: torch.Tensor, schedule: NoiseSchedule, steps: int = DEFAULT_STEPS) -> torch.Tensor:
    """Deterministic DDIM updates from t = T_max down to 0."""
    ts = sampling_timesteps(steps, schedule)
    z = z_T
    for i, t in enumerate(ts):
        t_prev = ts[i + 1] if i + 1 < len(ts) else 0
        ab, ab_prev = float(schedule.alpha_bars[t]), float(schedule.alpha_bars[t_prev])
        eps = eps_fn(z, t)
        z0_hat = (z - np.sqrt(1.0 - ab) * eps) / np.sqrt(ab)
        z = np.sqrt(ab_prev) * z0_hat + np.sqrt(1.0 - ab_prev) * eps
    return z


@torch.no_grad()
def sample(
    model: ToyDenoiser,
    task: TaskId | int,
    prompt: int,
    steps: int,
    schedule: NoiseSchedule,
    gen: torch.Generator,
    video_channels: int | None = None,
    z_T: torch.Tensor | None = None,
) -> tuple[torch.Tensor, torch.Tensor]:
    """Generate one (video latent, dense latent) pair from Gaussian noise."""
    cfg = model.cfg
    dtype = model.patch_out.weight.dtype
    if z_T is None:
        z_T = torch.randn((cfg.frames, cfg.channels, cfg.height, cfg.width), generator=gen, dtype=dtype)
    c = model.prompt_condition(prompt)
    task = int(task)

    def eps_fn(z, t):
        return model.denoise(z, model.task_time_embedding(task, t), c)

    z0 = ddim_sample(eps_fn, z_T, schedule, steps)
    return split_latents(z0, cfg.channels // 2 if video_channels is None else video_channels)
