"""Channel-wise stacking of video and dense-prediction latents.

Latents are laid out (T', C, H', W'), optionally with a leading batch axis,
so the channel axis is always -3.
"""

from __future__ import annotations

import torch

CHANNEL_AXIS = -3


def _check(z: torch.Tensor, name: str):
    if z.ndim < 4:
        raise ValueError(f"{name} must be (…, T, C, H, W), got shape {tuple(z.shape)}")


def concat_latents(zv: torch.Tensor, zc: torch.Tensor) -> torch.Tensor:
    """Video channels first, then the dense channels."""
    _check(zv, "video latent")
    _check(zc, "dense latent")
    lead_v, lead_c = zv.shape[:-3], zc.shape[:-3]
    if lead_v != lead_c or zv.shape[-2:] != zc.shape[-2:]:
        raise ValueError(f"latents disagree outside the channel axis: {tuple(zv.shape)} vs {tuple(zc.shape)}")
    return torch.cat([zv, zc], dim=CHANNEL_AXIS)


def split_latents(z: torch.Tensor, video_channels: int) -> tuple[torch.Tensor, torch.Tensor]:
    _check(z, "latent")
    C = z.shape[CHANNEL_AXIS]
    if not 0 <= video_channels <= C:
        raise ValueError(f"cannot split {video_channels} video channels from a {C}-channel latent")
    return z[..., :video_channels, :, :], z[..., video_channels:, :, :]
