"""Post-processing and validation for externally annotated video corpora."""

from __future__ import annotations

import logging
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable

import numpy as np
from scipy import ndimage

from .media_io import (
    DepthVideo,
    EntityMaskVideo,
    ManifestRecord,
    MediaError,
    list_frames,
    read_depth_video,
    read_mask_video,
    read_video,
)

log = logging.getLogger(__name__)

REFERENCE_AREA = 480 * 854
REFERENCE_MIN_AREA = 64
_FOUR = ndimage.generate_binary_structure(2, 1)

FAILURE_CATEGORIES = (
    "missing-dir",
    "unreadable",
    "frame-count",
    "dims",
    "temporal",
    "depth-range",
    "caption",
)


@dataclass(frozen=True)
class CleanupConfig:
    min_area: int = REFERENCE_MIN_AREA
    connectivity: int = 4
    max_passes: int = 16

    def __post_init__(self):
        if self.min_area < 1 or self.max_passes < 1:
            raise ValueError("min_area and max_passes must be >= 1")
        if self.connectivity != 4:
            raise ValueError("only 4-connectivity is supported")

    @classmethod
    def for_resolution(cls, height: int, width: int, **kw) -> "CleanupConfig":
        """Scale the reference threshold (64 px at 480x854) to another frame size."""
        area = max(1, round(REFERENCE_MIN_AREA * height * width / REFERENCE_AREA))
        return cls(min_area=area, **kw)


def _components(frame: np.ndarray):
    """Yield (label, component_mask, area) for every 4-connected region of every label."""
    for lab in np.unique(frame):
        comp, n = ndimage.label(frame == lab, structure=_FOUR)
        if n == 0:
            continue
        areas = np.bincount(comp.ravel())[1:]
        for k in range(n):
            yield int(lab), comp, k + 1, int(areas[k])


def _boundary_majority(frame: np.ndarray, region: np.ndarray) -> int | None:
    ring = ndimage.binary_dilation(region, structure=_FOUR) & ~region
    if not ring.any():
        return None
    labels, counts = np.unique(frame[ring], return_counts=True)
    return int(labels[np.argmax(counts)])  # np.unique is sorted: ties go to the smaller label


def _clean_frame(frame: np.ndarray, cfg: CleanupConfig) -> np.ndarray:
    frame = frame.copy()
    for _ in range(cfg.max_passes):
        small = [(area, lab, comp, k) for lab, comp, k, area in _components(frame) if area < cfg.min_area]
        if not small:
            break
        changed = False
        small.sort(key=lambda s: (s[0], s[1], s[3]))
        for _, lab, comp, k in small:
            region = (comp == k) & (frame == lab)
            if not region.any():
                continue
            # re-measure: earlier merges this pass may have grown the region
            grown, _ = ndimage.label(frame == lab, structure=_FOUR)
            ids = np.unique(grown[region])
            region = np.isin(grown, ids[ids > 0])
            if region.sum() >= cfg.min_area:
                continue
            target = _boundary_majority(frame, region)
            if target is None or target == lab:
                continue
            frame[region] = target
            changed = True
        if not changed:
            break
    return frame


def clean_masks(masks: EntityMaskVideo, cfg: CleanupConfig | None = None) -> EntityMaskVideo:
    """Relabel every sub-threshold 4-connected component to its boundary majority label.

    Applies to holes (background islands) and specks of any entity alike;
    passes repeat until no small component can be merged.
    """
    cfg = cfg or CleanupConfig.for_resolution(*masks.ids.shape[1:])
    out = np.stack([_clean_frame(f, cfg) for f in masks.ids])
    return EntityMaskVideo(out, entity_count=masks.entity_count)


def normalize_depth(raw) -> DepthVideo:
    """Per-video min-max normalization. Non-finite or negative values map to 0."""
    x = np.asarray(raw, dtype=np.float64)
    if x.ndim == 2:
        x = x[None]
    valid = np.isfinite(x) & (x >= 0)
    if not np.any(valid & (x > 0)):
        raise ValueError("depth video has no finite positive value")
    if not valid.all():
        log.warning("%d invalid depth values set to 0", int((~valid).sum()))
    lo, hi = x[valid].min(), x[valid].max()
    out = np.zeros_like(x)
    if hi - lo > 0:
        out[valid] = (x[valid] - lo) / (hi - lo)
    else:
        out[valid] = 0.5
    return DepthVideo(np.clip(out, 0.0, 1.0))


def choose_caption(record: ManifestRecord, p_long: float = 0.8, rng: np.random.Generator | None = None) -> str:
    long, short = record.caption_long, record.caption_short
    if not long and not short:
        raise ValueError(f"record {record.id}: both captions empty")
    if rng is None:
        rng = np.random.default_rng()
    draw = rng.random()  # drawn unconditionally so the stream stays aligned across records
    if not long or not short:
        log.info("record %s has one caption; using it", record.id)
        return long or short
    return long if draw < p_long else short


# -- validation ----------------------------------------------------------------------


@dataclass
class RecordIssue:
    id: str
    category: str
    detail: str

    def as_dict(self) -> dict:
        return {"id": self.id, "category": self.category, "detail": self.detail}


@dataclass
class ValidationReport:
    records: int = 0
    issues: list[RecordIssue] = field(default_factory=list)

    @property
    def counts(self) -> dict[str, int]:
        c = Counter(i.category for i in self.issues)
        return {k: c.get(k, 0) for k in FAILURE_CATEGORIES}

    @property
    def ok(self) -> bool:
        return not self.issues

    def lines(self) -> list[dict]:
        out = [i.as_dict() for i in self.issues]
        out.append({"summary": True, "records": self.records, **self.counts})
        return out


def temporal_violations(masks: EntityMaskVideo) -> list[tuple[int, list[int]]]:
    """Frames whose ids are not a subset of the previous frame's ids."""
    bad = []
    prev = set(np.unique(masks.ids[0]).tolist())
    for t in range(1, masks.frames):
        cur = set(np.unique(masks.ids[t]).tolist())
        new = sorted(cur - prev - {0})
        if new:
            bad.append((t, new))
        prev = cur
    return bad


def _check_record(r: ManifestRecord, root) -> list[RecordIssue]:
    issues: list[RecordIssue] = []

    def add(cat, detail):
        issues.append(RecordIssue(r.id, cat, detail))

    if not (r.caption_long.strip() or r.caption_short.strip()):
        add("caption", "no non-empty caption")

    frames_dir = r.resolve("frames_dir", root)
    try:
        video = read_video(frames_dir)
    except MediaError as exc:
        add("missing-dir" if not Path(frames_dir).is_dir() else "unreadable", f"video: {exc}")
        video = None
    if video is not None and r.num_frames and video.frames != r.num_frames:
        add("frame-count", f"manifest says {r.num_frames} frames, video has {video.frames}")

    ref_frames = video.frames if video is not None else (r.num_frames or None)
    for key, reader in (("seg_dir", read_mask_video), ("depth_dir", read_depth_video)):
        path = r.resolve(key, root)
        if path is None:
            continue
        kind = "mask" if key == "seg_dir" else "depth"
        if not path.is_dir():
            add("missing-dir", f"{kind}: {path} does not exist")
            continue
        try:
            n = len(list_frames(path))
        except MediaError as exc:
            add("unreadable", f"{kind}: {exc}")
            continue
        if ref_frames is not None and n != ref_frames:
            add("frame-count", f"{kind} has {n} frames, video has {ref_frames}")
        try:
            data = reader(path)
        except MediaError as exc:
            add("depth-range" if kind == "depth" else "unreadable", f"{kind}: {exc}")
            continue
        shape = data.ids.shape[1:] if kind == "mask" else data.depth.shape[1:]
        if video is not None and shape != (video.height, video.width):
            add("dims", f"{kind} frames are {shape[0]}x{shape[1]}, video is {video.height}x{video.width}")
        if kind == "mask":
            for t, new in temporal_violations(data):
                add("temporal", f"frame {t} introduces ids {new[:10]}")
                break
    return issues


def validate_dataset(records: Iterable[ManifestRecord], root: str | Path | None = None) -> ValidationReport:
    """Per-record consistency checks; report only, never raises for bad data."""
    records = sorted(records, key=lambda r: r.id)
    report = ValidationReport(records=len(records))
    for r in records:
        report.issues.extend(_check_record(r, root))
    return report
