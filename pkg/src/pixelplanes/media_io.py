"""On-disk formats and in-memory containers for videos, masks, depth and manifests.

Frame directories hold ``%06d.png`` files. RGB videos are 8-bit, entity masks
and depth maps are 16-bit single-channel. Manifests are JSON lines.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterable

import numpy as np
from PIL import Image, UnidentifiedImageError

FRAME_PATTERN = "{:06d}.png"
_FRAME_RE = re.compile(r"^(\d+)\.png$")

MANIFEST_KEYS = (
    "id",
    "frames_dir",
    "caption_long",
    "caption_short",
    "seg_dir",
    "depth_dir",
    "num_frames",
    "fps",
)


class MediaError(ValueError):
    """Raised for malformed frame directories or containers."""


class ManifestError(ValueError):
    def __init__(self, message: str, line: int | None = None):
        self.line = line
        super().__init__(f"line {line}: {message}" if line is not None else message)


@dataclass(frozen=True)
class VideoTensor:
    """RGB video of shape (T, H, W, 3) with values in [0, 1]."""

    pixels: np.ndarray

    def __post_init__(self):
        px = np.asarray(self.pixels, dtype=np.float64)
        if px.ndim != 4 or px.shape[-1] != 3:
            raise MediaError(f"video must have shape (T, H, W, 3), got {px.shape}")
        if px.shape[0] < 1:
            raise MediaError("video needs at least one frame")
        if not np.all(np.isfinite(px)) or px.min(initial=0.0) < 0.0 or px.max(initial=0.0) > 1.0:
            raise MediaError("video values must lie in [0, 1]")
        object.__setattr__(self, "pixels", px)

    @property
    def frames(self) -> int:
        return self.pixels.shape[0]

    @property
    def height(self) -> int:
        return self.pixels.shape[1]

    @property
    def width(self) -> int:
        return self.pixels.shape[2]

    def to_bytes(self) -> np.ndarray:
        return quantize_u8(self.pixels)

    @classmethod
    def from_bytes(cls, data: np.ndarray) -> "VideoTensor":
        return cls(np.asarray(data, dtype=np.float64) / 255.0)


@dataclass(frozen=True)
class EntityMaskVideo:
    """Per-pixel entity ids of shape (T, H, W); 0 is background.

    ``entity_count`` defaults to the largest id present.
    """

    ids: np.ndarray
    entity_count: int | None = None

    def __post_init__(self):
        ids = np.asarray(self.ids)
        if ids.ndim != 3 or ids.shape[0] < 1:
            raise MediaError(f"mask video must have shape (T, H, W), got {ids.shape}")
        if ids.size and not np.issubdtype(ids.dtype, np.integer):
            if not np.all(ids == np.round(ids)):
                raise MediaError("entity ids must be integers")
        ids = ids.astype(np.int64)
        if ids.size and ids.min() < 0:
            raise MediaError("entity ids must be non-negative")
        top = int(ids.max()) if ids.size else 0
        n = top if self.entity_count is None else int(self.entity_count)
        if n < top:
            raise MediaError(f"entity_count {n} is smaller than max id {top}")
        object.__setattr__(self, "ids", ids)
        object.__setattr__(self, "entity_count", n)

    @property
    def frames(self) -> int:
        return self.ids.shape[0]

    @property
    def shape(self) -> tuple[int, int, int]:
        return self.ids.shape

    def present_ids(self) -> np.ndarray:
        """Sorted non-background ids that occur anywhere in the video."""
        u = np.unique(self.ids)
        return u[u != 0]

    def __eq__(self, other):
        if not isinstance(other, EntityMaskVideo):
            return NotImplemented
        return self.ids.shape == other.ids.shape and bool(np.array_equal(self.ids, other.ids))

    __hash__ = None


@dataclass(frozen=True)
class DepthVideo:
    """Relative depth of shape (T, H, W) with values in [0, 1]."""

    depth: np.ndarray

    def __post_init__(self):
        d = np.asarray(self.depth, dtype=np.float64)
        if d.ndim != 3 or d.shape[0] < 1:
            raise MediaError(f"depth video must have shape (T, H, W), got {d.shape}")
        if not np.all(np.isfinite(d)) or d.min(initial=0.0) < 0.0 or d.max(initial=0.0) > 1.0:
            raise MediaError("depth values must lie in [0, 1]")
        object.__setattr__(self, "depth", d)

    @property
    def frames(self) -> int:
        return self.depth.shape[0]


def quantize_u8(values: np.ndarray) -> np.ndarray:
    """Round-half-up to bytes: 0.5 -> 128, 1.0 -> 255."""
    return np.floor(np.asarray(values, dtype=np.float64) * 255.0 + 0.5).clip(0, 255).astype(np.uint8)


def quantize_u16(values: np.ndarray) -> np.ndarray:
    return np.floor(np.asarray(values, dtype=np.float64) * 65535.0 + 0.5).clip(0, 65535).astype(np.uint16)


# -- frame directories -------------------------------------------------------


def list_frames(directory: str | Path) -> list[Path]:
    """Frame files of ``directory`` in index order; indices must be 0..T-1."""
    d = Path(directory)
    if not d.is_dir():
        raise MediaError(f"missing frame directory: {d}")
    indexed = []
    for p in d.iterdir():
        m = _FRAME_RE.match(p.name)
        if m:
            indexed.append((int(m.group(1)), p))
    indexed.sort()
    if not indexed:
        raise MediaError(f"no frame files in {d}")
    for expect, (idx, p) in enumerate(indexed):
        if idx != expect:
            raise MediaError(f"non-contiguous frame indices in {d}: expected {expect}, found {p.name}")
    return [p for _, p in indexed]


def count_frames(directory: str | Path) -> int:
    return len(list_frames(directory))


def _load_stack(directory, convert) -> np.ndarray:
    frames = []
    for p in list_frames(directory):
        try:
            with Image.open(p) as im:
                arr = convert(im, p)
        except (OSError, UnidentifiedImageError) as exc:
            raise MediaError(f"{p.name}: cannot decode image ({exc})") from None
        if frames and arr.shape != frames[0].shape:
            raise MediaError(f"inconsistent frame dimensions: {p.name} is {arr.shape}, expected {frames[0].shape}")
        frames.append(arr)
    return np.stack(frames)


def _rgb(im: Image.Image, path: Path) -> np.ndarray:
    if im.mode != "RGB":
        im = im.convert("RGB")
    return np.asarray(im, dtype=np.uint8)


def _gray16(im: Image.Image, path: Path) -> np.ndarray:
    if im.mode not in ("I;16", "I;16B", "I;16L", "I"):
        raise MediaError(f"{path.name}: expected 16-bit single-channel frame, got mode {im.mode}")
    arr = np.asarray(im)
    if arr.ndim != 2:
        raise MediaError(f"{path.name}: expected single-channel frame")
    if arr.min() < 0 or arr.max() > 65535:
        raise MediaError(f"{path.name}: values outside 16-bit range")
    return arr.astype(np.int64)


def _prepare_dir(directory: str | Path) -> Path:
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    for stale in d.glob("*.png"):
        if _FRAME_RE.match(stale.name):
            stale.unlink()
    return d


def read_video(directory: str | Path) -> VideoTensor:
    return VideoTensor.from_bytes(_load_stack(directory, _rgb))


def write_video(video: VideoTensor | np.ndarray, directory: str | Path) -> None:
    if not isinstance(video, VideoTensor):
        video = VideoTensor(video)
    d = _prepare_dir(directory)
    for t, frame in enumerate(video.to_bytes()):
        Image.fromarray(np.ascontiguousarray(frame)).save(d / FRAME_PATTERN.format(t))


def _write_gray16(stack: np.ndarray, directory) -> None:
    d = _prepare_dir(directory)
    for t, frame in enumerate(stack):
        Image.fromarray(np.ascontiguousarray(frame.astype(np.uint16))).save(d / FRAME_PATTERN.format(t))


def read_mask_video(directory: str | Path) -> EntityMaskVideo:
    return EntityMaskVideo(_load_stack(directory, _gray16))


def write_mask_video(masks: EntityMaskVideo, directory: str | Path) -> None:
    if masks.ids.size and masks.ids.max() > 65535:
        raise MediaError(f"entity id {int(masks.ids.max())} exceeds 65535")
    _write_gray16(masks.ids, directory)


def read_depth_video(directory: str | Path) -> DepthVideo:
    return DepthVideo(_load_stack(directory, _gray16) / 65535.0)


def write_depth_video(depth: DepthVideo, directory: str | Path) -> None:
    _write_gray16(quantize_u16(depth.depth), directory)


# -- manifests ---------------------------------------------------------------


@dataclass
class ManifestRecord:
    id: str
    frames_dir: str
    caption_long: str = ""
    caption_short: str = ""
    seg_dir: str | None = None
    depth_dir: str | None = None
    num_frames: int = 0
    fps: float = 0.0
    extra: dict[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        if not str(self.id):
            raise ManifestError("record id must be non-empty")
        if not (self.caption_long or self.caption_short):
            raise ManifestError(f"record {self.id}: at least one caption must be non-empty")
        if int(self.num_frames) < 0:
            raise ManifestError(f"record {self.id}: num_frames must be non-negative")

    def to_dict(self) -> dict[str, Any]:
        out = {k: getattr(self, k) for k in MANIFEST_KEYS}
        out.update(self.extra)
        return out

    @classmethod
    def from_dict(cls, obj: dict[str, Any]) -> "ManifestRecord":
        missing = [k for k in ("id", "frames_dir") if k not in obj]
        if missing:
            raise ManifestError(f"missing required keys: {', '.join(missing)}")
        known = {k: obj[k] for k in MANIFEST_KEYS if k in obj}
        extra = {k: v for k, v in obj.items() if k not in MANIFEST_KEYS}
        known["id"] = str(known["id"])
        if "num_frames" in known:
            known["num_frames"] = int(known["num_frames"])
        if "fps" in known:
            known["fps"] = float(known["fps"])
        return cls(**known, extra=extra)

    def resolve(self, key: str, root: str | Path | None) -> Path | None:
        value = getattr(self, key)
        if value is None:
            return None
        p = Path(value)
        if root is not None and not p.is_absolute():
            p = Path(root) / p
        return p


def read_manifest(path: str | Path) -> list[ManifestRecord]:
    records = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ManifestError(f"malformed JSON: {exc.msg}", lineno) from None
            if not isinstance(obj, dict):
                raise ManifestError("record must be a JSON object", lineno)
            try:
                records.append(ManifestRecord.from_dict(obj))
            except (ManifestError, TypeError, ValueError) as exc:
                msg = str(exc) if not isinstance(exc, ManifestError) else exc.args[0]
                raise ManifestError(msg, lineno) from None
    return records


def write_manifest(records: Iterable[ManifestRecord], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for r in records:
            fh.write(json.dumps(r.to_dict(), ensure_ascii=False) + "\n")
