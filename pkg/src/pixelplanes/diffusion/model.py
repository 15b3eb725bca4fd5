"""Toy spatiotemporal diffusion transformer.

Latents (B, T, C, H, W) are cut into (pt, ph, pw) patches, projected to
tokens, mixed by pre-norm self-attention blocks and projected back. The
joint condition is the task embedding plus the timestep embedding, plus a
learned prompt-class vector standing in for the text encoder; a per-block
projection of it is added to every token.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, replace
from enum import IntEnum

import torch
import torch.nn.functional as F
from torch import nn


class TaskId(IntEnum):
    SEGMENTATION = 0
    DEPTH = 1


@dataclass(frozen=True)
class DenoiserConfig:
    channels: int = 32
    frames: int = 4
    height: int = 8
    width: int = 8
    patch: tuple[int, int, int] = (1, 2, 2)
    dim: int = 64
    depth: int = 2
    heads: int = 4
    mlp_ratio: float = 2.0
    num_prompts: int = 4
    time_freqs: int = 32
    pos_embed: bool = True

    def __post_init__(self):
        object.__setattr__(self, "patch", tuple(int(p) for p in self.patch))
        pt, ph, pw = self.patch
        if self.frames % pt or self.height % ph or self.width % pw:
            raise ValueError(f"latent ({self.frames},{self.height},{self.width}) not divisible by patch {self.patch}")
        if self.dim % self.heads:
            raise ValueError("dim must be divisible by heads")
        if self.time_freqs % 2:
            raise ValueError("time_freqs must be even")

    @property
    def grid(self) -> tuple[int, int, int]:
        pt, ph, pw = self.patch
        return self.frames // pt, self.height // ph, self.width // pw

    @property
    def tokens(self) -> int:
        g = self.grid
        return g[0] * g[1] * g[2]

    @property
    def patch_volume(self) -> int:
        return self.patch[0] * self.patch[1] * self.patch[2]

    def to_dict(self) -> dict:
        d = asdict(self)
        d["patch"] = list(self.patch)
        return d


def sinusoidal_embedding(t: torch.Tensor, dim: int, max_period: float = 10000.0) -> torch.Tensor:
    half = dim // 2
    freqs = torch.exp(-math.log(max_period) * torch.arange(half, dtype=torch.float64) / half)
    args = t.to(torch.float64)[:, None] * freqs[None]
    return torch.cat([torch.cos(args), torch.sin(args)], dim=-1)


class Block(nn.Module):
    def __init__(self, dim: int, heads: int, mlp_ratio: float):
        super().__init__()
        self.heads = heads
        self.cond = nn.Linear(dim, dim)
        self.norm1 = nn.LayerNorm(dim)
        self.qkv = nn.Linear(dim, 3 * dim)
        self.proj = nn.Linear(dim, dim)
        self.norm2 = nn.LayerNorm(dim)
        hidden = int(dim * mlp_ratio)
        self.fc1 = nn.Linear(dim, hidden)
        self.fc2 = nn.Linear(hidden, dim)

    def attention(self, x: torch.Tensor) -> torch.Tensor:
        B, N, D = x.shape
        q, k, v = self.qkv(x).reshape(B, N, 3, self.heads, D // self.heads).permute(2, 0, 3, 1, 4)
        w = torch.softmax(q @ k.transpose(-2, -1) / math.sqrt(D // self.heads), dim=-1)
        return self.proj((w @ v).transpose(1, 2).reshape(B, N, D))

    def forward(self, x: torch.Tensor, cond: torch.Tensor) -> torch.Tensor:
        x = x + self.cond(F.silu(cond))[:, None, :]
        x = x + self.attention(self.norm1(x))
        return x + self.fc2(F.gelu(self.fc1(self.norm2(x))))


class ToyDenoiser(nn.Module):
    def __init__(self, cfg: DenoiserConfig):
        super().__init__()
        self.cfg = cfg
        io = cfg.channels * cfg.patch_volume
        self.patch_in = nn.Linear(io, cfg.dim, bias=False)
        self.pos = nn.Parameter(torch.randn(cfg.tokens, cfg.dim) * 0.02) if cfg.pos_embed else None
        self.time_mlp = nn.Sequential(nn.Linear(cfg.time_freqs, cfg.dim), nn.SiLU(), nn.Linear(cfg.dim, cfg.dim))
        self.task_embed = nn.Embedding(len(TaskId), cfg.dim)
        self.prompt_embed = nn.Embedding(cfg.num_prompts, cfg.dim)
        nn.init.normal_(self.task_embed.weight, std=0.02)
        nn.init.normal_(self.prompt_embed.weight, std=0.02)
        self.blocks = nn.ModuleList([Block(cfg.dim, cfg.heads, cfg.mlp_ratio) for _ in range(cfg.depth)])
        self.norm_out = nn.LayerNorm(cfg.dim)
        self.patch_out = nn.Linear(cfg.dim, io)
        nn.init.zeros_(self.patch_out.weight)
        nn.init.zeros_(self.patch_out.bias)

    # -- (un)patchify ----------------------------------------------------------

    def patchify(self, z: torch.Tensor) -> torch.Tensor:
        cfg = self.cfg
        B, T, C, H, W = z.shape
        if (T, C, H, W) != (cfg.frames, cfg.channels, cfg.height, cfg.width):
            raise ValueError(
                f"expected latent (T, C, H, W) = {(cfg.frames, cfg.channels, cfg.height, cfg.width)}, got {(T, C, H, W)}"
            )
        pt, ph, pw = cfg.patch
        gt, gh, gw = cfg.grid
        x = z.reshape(B, gt, pt, C, gh, ph, gw, pw).permute(0, 1, 4, 6, 3, 2, 5, 7)
        return x.reshape(B, gt * gh * gw, C * pt * ph * pw)  # channel-major patch vectors

    def unpatchify(self, x: torch.Tensor) -> torch.Tensor:
        cfg = self.cfg
        B = x.shape[0]
        pt, ph, pw = cfg.patch
        gt, gh, gw = cfg.grid
        x = x.reshape(B, gt, gh, gw, cfg.channels, pt, ph, pw).permute(0, 1, 5, 4, 2, 6, 3, 7)
        return x.reshape(B, cfg.frames, cfg.channels, cfg.height, cfg.width)

    # -- conditioning ------------------------------------------------------------

    def timestep_embedding(self, t: torch.Tensor) -> torch.Tensor:
        basis = sinusoidal_embedding(t, self.cfg.time_freqs).to(self.patch_out.weight.dtype)
        return self.time_mlp(basis)

    def task_time_embedding(self, task, t) -> torch.Tensor:
        """t_d = e_task(d) + e_time(t), one row per batch element."""
        task = torch.atleast_1d(torch.as_tensor(task, dtype=torch.long))
        t = torch.atleast_1d(torch.as_tensor(t, dtype=torch.long))
        return self.task_embed(task) + self.timestep_embedding(t)

    def prompt_condition(self, prompt) -> torch.Tensor:
        return self.prompt_embed(torch.atleast_1d(torch.as_tensor(prompt, dtype=torch.long)))

    # -- forward -----------------------------------------------------------------

    def input_projection(self, z: torch.Tensor) -> torch.Tensor:
        return self.patch_in(self.patchify(z))

    def denoise(self, z: torch.Tensor, t_d: torch.Tensor, c: torch.Tensor) -> torch.Tensor:
        """Predict the noise in ``z`` given the joint condition and prompt vector."""
        unbatched = z.ndim == 4
        if unbatched:
            z = z[None]
        x = self.input_projection(z)
        if self.pos is not None:
            x = x + self.pos
        cond = torch.broadcast_to(t_d + c, (x.shape[0], self.cfg.dim))
        for blk in self.blocks:
            x = blk(x, cond)
        out = self.unpatchify(self.patch_out(self.norm_out(x)))
        return out[0] if unbatched else out

    def forward(self, z: torch.Tensor, t, task, prompt) -> torch.Tensor:
        return self.denoise(z, self.task_time_embedding(task, t), self.prompt_condition(prompt))


def task_time_embedding(task, t, model: ToyDenoiser) -> torch.Tensor:
    return model.task_time_embedding(task, t)


def denoise(z_t: torch.Tensor, t_d: torch.Tensor, c: torch.Tensor, model: ToyDenoiser) -> torch.Tensor:
    return model.denoise(z_t, t_d, c)


def build_model(cfg: DenoiserConfig, seed: int = 0, dtype: torch.dtype = torch.float32) -> ToyDenoiser:
    with torch.random.fork_rng(devices=[]):
        torch.manual_seed(seed)
        model = ToyDenoiser(cfg)
    return model.to(dtype)


def expand_io_channels(model: ToyDenoiser) -> ToyDenoiser:
    """Double the latent channels, initializing new channels as copies of the old.

    Patch vectors are channel-major, so the copy is a concatenation of the
    input weight along its columns and of the output weight/bias along rows.
    """
    old = model.cfg
    with torch.random.fork_rng(devices=[]):
        new = ToyDenoiser(replace(old, channels=2 * old.channels)).to(model.patch_out.weight.dtype)
    state = {k: v.clone() for k, v in model.state_dict().items()}
    state["patch_in.weight"] = torch.cat([state["patch_in.weight"]] * 2, dim=1)
    state["patch_out.weight"] = torch.cat([state["patch_out.weight"]] * 2, dim=0)
    state["patch_out.bias"] = torch.cat([state["patch_out.bias"]] * 2, dim=0)
    new.load_state_dict(state)
    return new
