"""Depth <-> spectral RGB colormap codec.

Depth in [0, 1] is rendered through a piecewise-linear spectral ramp. To go
back, the ramp is sampled at k/256 for k = 1..256 and every pixel snaps to the
nearest sample (Euclidean, smallest k on ties).
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .media_io import DepthVideo, VideoTensor

NUM_SAMPLES = 256
MIN_SAMPLE_DISTANCE = 2.0
PALETTE_VERSION = 1
_PALETTE_MAGIC = "# pixelplanes spectral palette v1"

# red -> orange -> yellow -> green -> teal -> blue -> violet, near to far.
# Each segment is long enough that neighboring bytes-rounded samples stay >= 2 apart.
DEFAULT_ANCHORS: tuple[tuple[float, tuple[int, int, int]], ...] = (
    (0.000, (120, 0, 70)),
    (0.125, (215, 25, 28)),
    (0.250, (240, 95, 70)),
    (0.375, (252, 175, 45)),
    (0.500, (225, 245, 95)),
    (0.625, (140, 215, 90)),
    (0.750, (50, 180, 150)),
    (0.875, (40, 110, 200)),
    (1.000, (60, 30, 140)),
)


class PaletteError(ValueError):
    pass


def _round_half_up(x: np.ndarray) -> np.ndarray:
    return np.floor(x + 0.5)


@dataclass(frozen=True)
class SpectralPalette:
    positions: np.ndarray  # (A,) strictly increasing, 0 .. 1
    anchor_colors: np.ndarray  # (A, 3) float byte values
    samples: np.ndarray  # (256, 3) uint8, samples[k-1] = round(ramp(k/256))

    def ramp(self, depth) -> np.ndarray:
        """Continuous depth -> RGB (byte units, unrounded)."""
        d = np.clip(np.asarray(depth, dtype=np.float64), 0.0, 1.0)
        return np.stack([np.interp(d, self.positions, self.anchor_colors[:, c]) for c in range(3)], axis=-1)

    def color(self, depth) -> np.ndarray:
        return _round_half_up(self.ramp(depth)).astype(np.uint8)

    @property
    def anchors(self) -> list[tuple[float, tuple[int, int, int]]]:
        return [(float(p), tuple(int(v) for v in c)) for p, c in zip(self.positions, self.anchor_colors)]


def min_sample_distance(samples: np.ndarray) -> float:
    s = samples.astype(np.float64)
    d = np.sqrt(((s[:, None, :] - s[None, :, :]) ** 2).sum(axis=2))
    np.fill_diagonal(d, np.inf)
    return float(d.min())


def _check_anchors(anchors) -> tuple[np.ndarray, np.ndarray]:
    if len(anchors) < 2:
        raise PaletteError("need at least two anchors")
    pos = np.array([float(a[0]) for a in anchors])
    cols = np.array([[float(v) for v in a[1]] for a in anchors])
    if cols.shape[1] != 3 or cols.min() < 0 or cols.max() > 255:
        raise PaletteError("anchor colors must be RGB byte triples")
    if np.any(np.diff(pos) <= 0):
        raise PaletteError(f"non-monotone anchor positions: {pos.tolist()}")
    if pos[0] != 0.0 or pos[-1] != 1.0:
        raise PaletteError("anchor positions must cover [0, 1]")
    return pos, cols


def build_palette(
    anchors: Sequence[tuple[float, Sequence[int]]] = DEFAULT_ANCHORS, strict: bool = True
) -> SpectralPalette:
    """Build the ramp and its 256 samples.

    With ``strict`` the samples must be pairwise at least ``MIN_SAMPLE_DISTANCE``
    apart, otherwise inversion would be ambiguous and construction fails.
    """
    pos, cols = _check_anchors(anchors)
    k = np.arange(1, NUM_SAMPLES + 1)
    pal = SpectralPalette(pos, cols, np.zeros((NUM_SAMPLES, 3), dtype=np.uint8))
    samples = pal.color(k / NUM_SAMPLES)
    pal = SpectralPalette(pos, cols, samples)
    if strict:
        dmin = min_sample_distance(samples)
        if dmin < MIN_SAMPLE_DISTANCE:
            raise PaletteError(f"palette samples too close: min pairwise distance {dmin:.3f} < {MIN_SAMPLE_DISTANCE}")
    return pal


_default: SpectralPalette | None = None


def default_palette() -> SpectralPalette:
    global _default
    if _default is None:
        _default = build_palette(DEFAULT_ANCHORS)
    return _default


def encode_depth(depth: DepthVideo, palette: SpectralPalette | None = None) -> VideoTensor:
    palette = palette or default_palette()
    return VideoTensor.from_bytes(palette.color(depth.depth))


def nearest_sample(rgb_bytes: np.ndarray, palette: SpectralPalette, chunk: int = 8192) -> np.ndarray:
    """Index k in 1..256 of the closest palette sample for each (…, 3) color."""
    flat = np.asarray(rgb_bytes, dtype=np.float64).reshape(-1, 3)
    uniq, inverse = np.unique(flat, axis=0, return_inverse=True)
    s = palette.samples.astype(np.float64)
    best = np.empty(len(uniq), dtype=np.int64)
    for a in range(0, len(uniq), chunk):
        u = uniq[a : a + chunk]
        d2 = ((u[:, None, :] - s[None, :, :]) ** 2).sum(axis=2)
        best[a : a + chunk] = np.argmin(d2, axis=1) + 1  # argmin keeps the first (smallest k)
    return best[inverse.reshape(-1)].reshape(np.shape(rgb_bytes)[:-1])


def invert_depth(video: VideoTensor, palette: SpectralPalette | None = None) -> DepthVideo:
    palette = palette or default_palette()
    k = nearest_sample(np.round(video.pixels * 255.0, 6), palette)
    return DepthVideo(k / NUM_SAMPLES)


def write_palette(palette: SpectralPalette, path: str | Path) -> None:
    lines = [_PALETTE_MAGIC, f"anchors {len(palette.positions)}"]
    for p, c in zip(palette.positions, palette.anchor_colors):
        lines.append(f"anchor {float(p)!r} {c[0]:g} {c[1]:g} {c[2]:g}")
    lines.append(f"samples {NUM_SAMPLES}")
    lines += [f"{k} {r} {g} {b}" for k, (r, g, b) in enumerate(palette.samples.tolist(), start=1)]
    Path(path).write_text("\n".join(lines) + "\n", encoding="ascii")


def read_palette(path: str | Path) -> SpectralPalette:
    lines = Path(path).read_text(encoding="ascii").splitlines()
    if not lines or lines[0].strip() != _PALETTE_MAGIC:
        raise PaletteError(f"{path}: not a palette file")
    anchors, samples = [], {}
    for lineno, line in enumerate(lines[1:], start=2):
        parts = line.split()
        if not parts or parts[0] in ("anchors", "samples"):
            continue
        try:
            if parts[0] == "anchor" and len(parts) == 5:
                anchors.append((float(parts[1]), tuple(float(v) for v in parts[2:])))
            elif len(parts) == 4:
                k, r, g, b = (int(v) for v in parts)
                if not all(0 <= v <= 255 for v in (r, g, b)):
                    raise ValueError("channel out of range")
                samples[k] = (r, g, b)
            else:
                raise ValueError("unrecognized line")
        except ValueError as exc:
            raise PaletteError(f"{path}:{lineno}: {exc}") from None
    pal = build_palette(anchors)
    if samples:
        if sorted(samples) != list(range(1, NUM_SAMPLES + 1)):
            raise PaletteError(f"{path}: expected samples for k = 1..{NUM_SAMPLES}")
        listed = np.array([samples[k] for k in range(1, NUM_SAMPLES + 1)], dtype=np.uint8)
        if not np.array_equal(listed, pal.samples):
            raise PaletteError(f"{path}: listed samples disagree with the anchors")
    return pal
