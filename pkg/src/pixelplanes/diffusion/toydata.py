"""Procedural toy corpus: moving rectangles with their colormaps, pooled to latent size.

The 3D VAE is out of reach at this scale, so a "latent" is the RGB frame
(video, Pixelplanes segmentation or spectral depth) average-pooled to the
latent grid and mapped to [-1, 1].
"""

from __future__ import annotations

import numpy as np
import torch

from ..depth_codec import SpectralPalette, default_palette, encode_depth
from ..media_io import DepthVideo, EntityMaskVideo, VideoTensor
from ..seg_codec import DEFAULT_MIN_SEPARATION, encode_segmentation
from .train import ToyCorpus

# prompt class -> per-frame motion (dy, dx) in pixels
DIRECTIONS = ((0, 2), (0, -2), (2, 0), (-2, 0))


def render_scene(rng: np.random.Generator, prompt: int, frames: int = 4, size: int = 32, max_entities: int = 3):
    yy = np.linspace(0.0, 1.0, size)[:, None] * np.ones((1, size))
    bg_top, bg_bottom = rng.uniform(0.1, 0.9, 3), rng.uniform(0.1, 0.9, 3)
    bg_rgb = bg_top[None, None] * (1 - yy[..., None]) + bg_bottom[None, None] * yy[..., None]
    bg_depth = 1.0 - 0.4 * yy  # far at the top

    k = int(rng.integers(1, max_entities + 1))
    ents = []
    for _ in range(k):
        h, w = rng.integers(6, 13, 2)
        y0, x0 = rng.integers(0, size - h), rng.integers(0, size - w)
        ents.append((int(h), int(w), int(y0), int(x0), rng.uniform(0.0, 1.0, 3), float(rng.uniform(0.1, 0.55))))
    order = sorted(range(k), key=lambda j: -ents[j][5])  # paint far to near

    dy, dx = DIRECTIONS[prompt]
    rgb = np.empty((frames, size, size, 3))
    ids = np.zeros((frames, size, size), dtype=np.int64)
    depth = np.empty((frames, size, size))
    for t in range(frames):
        rgb[t], depth[t] = bg_rgb, bg_depth
        for j in order:
            h, w, y0, x0, color, d = ents[j]
            y, x = int(np.clip(y0 + dy * t, 0, size - h)), int(np.clip(x0 + dx * t, 0, size - w))
            rgb[t, y : y + h, x : x + w] = color
            ids[t, y : y + h, x : x + w] = j + 1
            depth[t, y : y + h, x : x + w] = d
    return VideoTensor(rgb), EntityMaskVideo(ids, entity_count=k), DepthVideo(depth)


def pool_to_latent(video: VideoTensor, latent: int) -> torch.Tensor:
    T, H, W, _ = video.pixels.shape
    f = H // latent
    x = video.pixels[:, : f * latent, : f * latent].reshape(T, latent, f, latent, f, 3).mean(axis=(2, 4))
    return torch.from_numpy(2.0 * x.transpose(0, 3, 1, 2) - 1.0)  # (T, 3, latent, latent)


def make_toy_corpus(
    n: int = 64,
    seed: int = 0,
    frames: int = 4,
    size: int = 32,
    latent: int = 8,
    palette: SpectralPalette | None = None,
    dtype: torch.dtype = torch.float32,
) -> ToyCorpus:
    palette = palette or default_palette()
    ss = np.random.SeedSequence(seed)
    rng = np.random.default_rng(ss.spawn(1)[0])
    videos, segs, depths, prompts = [], [], [], []
    for i in range(n):
        prompt = int(rng.integers(0, len(DIRECTIONS)))
        video, masks, depth = render_scene(rng, prompt, frames, size)
        seg_rgb, _ = encode_segmentation(masks, seed=seed * 1_000_003 + i, min_separation=DEFAULT_MIN_SEPARATION)
        videos.append(pool_to_latent(video, latent))
        segs.append(pool_to_latent(seg_rgb, latent))
        depths.append(pool_to_latent(encode_depth(depth, palette), latent))
        prompts.append(prompt)
    stack = lambda xs: torch.stack(xs).to(dtype)  # noqa: E731
    return ToyCorpus(stack(videos), stack(segs), stack(depths), torch.tensor(prompts, dtype=torch.long))
