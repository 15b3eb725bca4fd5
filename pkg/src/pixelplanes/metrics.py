"""Evaluation kernels: temporal consistency, motion smoothness, Frechet distance, depth accuracy.

Feature extraction (DINO, CLIP, I3D) happens elsewhere; features arrive as
binary files of per-frame vectors.
"""

from __future__ import annotations

import json
import logging
import math
import struct
from collections import Counter
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Iterable

import numpy as np

from .media_io import DepthVideo, ManifestRecord, VideoTensor, read_mask_video

log = logging.getLogger(__name__)

SMOOTHNESS_SCALE = 0.5
DELTA_THRESHOLD = 1.25
EIG_TOLERANCE = 1e-8


class MetricError(ValueError):
    pass


@dataclass(frozen=True)
class FeatureSequence:
    vectors: np.ndarray  # (T, dim)

    def __post_init__(self):
        v = np.asarray(self.vectors, dtype=np.float64)
        if v.ndim != 2 or v.shape[0] < 1:
            raise MetricError(f"features must have shape (T, dim), got {v.shape}")
        if not np.all(np.isfinite(v)):
            raise MetricError("features must be finite")
        object.__setattr__(self, "vectors", v)

    @property
    def frames(self) -> int:
        return self.vectors.shape[0]

    @property
    def dim(self) -> int:
        return self.vectors.shape[1]


@dataclass
class MetricReport:
    subject_consistency: float | None = None
    background_consistency: float | None = None
    motion_smoothness: float | None = None
    frechet: float | None = None
    delta1: float | None = None
    rmse: float | None = None

    def as_dict(self) -> dict:
        return {k: v for k, v in asdict(self).items() if v is not None}


# -- feature files -------------------------------------------------------------


def write_features(seq: FeatureSequence | np.ndarray, path: str | Path) -> None:
    """Header: two little-endian uint32 (T, dim); then row-major float32."""
    v = seq.vectors if isinstance(seq, FeatureSequence) else np.asarray(seq)
    with open(path, "wb") as fh:
        fh.write(struct.pack("<II", *v.shape))
        fh.write(np.ascontiguousarray(v, dtype="<f4").tobytes())


def read_features(path: str | Path) -> FeatureSequence:
    raw = Path(path).read_bytes()
    if len(raw) < 8:
        raise MetricError(f"{path}: truncated feature header")
    T, dim = struct.unpack("<II", raw[:8])
    body = raw[8:]
    if len(body) != 4 * T * dim:
        raise MetricError(f"{path}: expected {T}x{dim} floats, found {len(body) // 4}")
    return FeatureSequence(np.frombuffer(body, dtype="<f4").reshape(T, dim).astype(np.float64))


# -- temporal consistency ----------------------------------------------------------


def _cos(a: np.ndarray, b: np.ndarray) -> float:
    na, nb = np.linalg.norm(a), np.linalg.norm(b)
    if na == 0.0 or nb == 0.0:
        log.warning("zero-norm feature vector; similarity treated as 0")
        return 0.0
    return float(np.dot(a, b) / (na * nb))


def frame_consistency(features: FeatureSequence | np.ndarray) -> float:
    """Mean over t >= 2 of the average cosine to the first and the previous frame."""
    f = features.vectors if isinstance(features, FeatureSequence) else np.asarray(features, dtype=np.float64)
    if f.shape[0] < 2:
        raise MetricError("consistency needs at least two frames")
    total = 0.0
    for t in range(1, f.shape[0]):
        total += 0.5 * (_cos(f[0], f[t]) + _cos(f[t - 1], f[t]))
    return min(1.0, max(0.0, total / (f.shape[0] - 1)))


def subject_consistency(features) -> float:
    return frame_consistency(features)


def background_consistency(features) -> float:
    return frame_consistency(features)


# -- motion smoothness -------------------------------------------------------------


def mean_abs_acceleration(video: VideoTensor | np.ndarray) -> float:
    x = video.pixels if isinstance(video, VideoTensor) else np.asarray(video, dtype=np.float64)
    if x.shape[0] < 3:
        raise MetricError("motion smoothness needs at least three frames")
    return float(np.abs(x[2:] - 2.0 * x[1:-1] + x[:-2]).mean())


def motion_smoothness(video: VideoTensor | np.ndarray, scale: float = SMOOTHNESS_SCALE) -> float:
    return 1.0 - min(1.0, mean_abs_acceleration(video) / scale)


# -- Frechet distance --------------------------------------------------------------


def _psd_sqrt(m: np.ndarray, what: str) -> np.ndarray:
    m = 0.5 * (m + m.T)
    w, v = np.linalg.eigh(m)
    tol = EIG_TOLERANCE * max(1.0, float(np.abs(w).max(initial=0.0)))
    if w.min(initial=0.0) < -tol:
        raise MetricError(f"{what} is indefinite: eigenvalue {w.min():.3e}")
    w = np.clip(w, 0.0, None)
    return (v * np.sqrt(w)) @ v.T


def frechet_from_stats(mu_a, cov_a, mu_b, cov_b) -> float:
    """||mu_a - mu_b||^2 + Tr(S_a + S_b - 2 (S_a S_b)^1/2).

    The trace of the non-symmetric root is taken through the symmetric
    product sqrt(S_a) S_b sqrt(S_a), which has the same eigenvalues.
    """
    mu_a, mu_b = np.atleast_1d(mu_a).astype(np.float64), np.atleast_1d(mu_b).astype(np.float64)
    cov_a, cov_b = np.atleast_2d(cov_a).astype(np.float64), np.atleast_2d(cov_b).astype(np.float64)
    if mu_a.shape != mu_b.shape or cov_a.shape != cov_b.shape or cov_a.shape[0] != mu_a.shape[0]:
        raise MetricError("dimension mismatch between feature sets")
    root_a = _psd_sqrt(cov_a, "covariance")
    cross = _psd_sqrt(root_a @ cov_b @ root_a, "covariance product")
    diff = mu_a - mu_b
    value = float(diff @ diff + np.trace(cov_a) + np.trace(cov_b) - 2.0 * np.trace(cross))
    return max(0.0, value)


def _stack(features) -> np.ndarray:
    if isinstance(features, FeatureSequence):
        return features.vectors
    if isinstance(features, np.ndarray):
        return np.asarray(features, dtype=np.float64)
    rows = [f.vectors if isinstance(f, FeatureSequence) else np.atleast_2d(np.asarray(f, dtype=np.float64)) for f in features]
    dims = {r.shape[1] for r in rows}
    if len(dims) != 1:
        raise MetricError(f"feature dims differ within a set: {sorted(dims)}")
    return np.vstack(rows)


def frechet_distance(a, b) -> float:
    """Frechet distance between Gaussian fits of two feature sets.

    Each side is a FeatureSequence, an (N, dim) array, or an iterable of
    either; all vectors on a side are pooled. Covariance uses ddof=1.
    """
    xa, xb = _stack(a), _stack(b)
    if xa.shape[0] < 2 or xb.shape[0] < 2:
        raise MetricError("need at least two vectors per side")
    if xa.shape[1] != xb.shape[1]:
        raise MetricError(f"dimension mismatch: {xa.shape[1]} vs {xb.shape[1]}")
    cov_a = np.atleast_2d(np.cov(xa, rowvar=False))
    cov_b = np.atleast_2d(np.cov(xb, rowvar=False))
    return frechet_from_stats(xa.mean(axis=0), cov_a, xb.mean(axis=0), cov_b)


# -- depth accuracy ----------------------------------------------------------------


def _depth_arrays(pred, gt) -> tuple[np.ndarray, np.ndarray]:
    p = pred.depth if isinstance(pred, DepthVideo) else np.asarray(pred, dtype=np.float64)
    g = gt.depth if isinstance(gt, DepthVideo) else np.asarray(gt, dtype=np.float64)
    if p.shape != g.shape:
        raise MetricError(f"shape mismatch: {p.shape} vs {g.shape}")
    return p, g


def delta_accuracy(pred, gt, thresh: float = DELTA_THRESHOLD) -> float:
    """Fraction of pixels with max(pred/gt, gt/pred) < thresh; gt <= 0 is excluded."""
    p, g = _depth_arrays(pred, gt)
    valid = g > 0
    excluded = int(valid.size - valid.sum())
    if excluded:
        log.info("delta accuracy: %d zero-gt pixels excluded", excluded)
    if not valid.any():
        raise MetricError("no evaluable pixels (gt is zero everywhere)")
    pv, gv = p[valid], g[valid]
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.maximum(pv / gv, np.where(pv > 0, gv / pv, np.inf))
    return float(np.count_nonzero(ratio < thresh) / pv.size)


def rmse(pred, gt) -> float:
    p, g = _depth_arrays(pred, gt)
    return float(np.sqrt(np.mean((p - g) ** 2)))


def affine_fit(pred, gt) -> tuple[float, float]:
    """Least-squares (a, b) minimizing ||a * pred + b - gt||^2."""
    p, g = _depth_arrays(pred, gt)
    p, g = p.ravel(), g.ravel()
    pc = p - p.mean()
    var = float(pc @ pc)
    if var <= 1e-24 * max(1.0, p.size):
        raise MetricError("prediction is constant; alignment is not unique")
    a = float(pc @ (g - g.mean()) / var)
    b = float(g.mean() - a * p.mean())
    return a, b


def align_depth(pred, gt) -> DepthVideo:
    p, _ = _depth_arrays(pred, gt)
    a, b = affine_fit(pred, gt)
    return DepthVideo(np.clip(a * p + b, 0.0, 1.0))


# -- dataset statistics ------------------------------------------------------------


def entity_count_histogram(records: Iterable[ManifestRecord], root: str | Path | None = None, bucket: int = 1) -> dict[int, int]:
    """Histogram of per-video entity counts (largest id) keyed by bucket start."""
    counts: Counter[int] = Counter()
    for r in records:
        seg = r.resolve("seg_dir", root)
        if seg is None:
            raise MetricError(f"record {r.id} has no seg_dir")
        n = read_mask_video(seg).entity_count
        counts[(n // bucket) * bucket] += 1
    return dict(sorted(counts.items()))


def report_lines(report: dict, fmt: str = "text") -> str:
    if fmt == "json-lines":
        return json.dumps(report, sort_keys=True)
    return "\n".join(f"{k}: {_fmt(v)}" for k, v in report.items())


def _fmt(v) -> str:
    if isinstance(v, float):
        return f"{v:.6f}" if math.isfinite(v) else str(v)
    return str(v)
