"""Entity mask <-> RGB colormap codec.

Every entity receives one random color for the whole video. Colors are drawn
by seeded rejection sampling so that any two colors, and every color and the
black background, are at least ``min_separation`` apart in Chebyshev distance.
The location-aware grid colormap is kept as an ablation baseline.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.spatial import cKDTree

from .media_io import EntityMaskVideo, VideoTensor

log = logging.getLogger(__name__)

DEFAULT_MIN_SEPARATION = 8
MAX_ENTITIES = 65535
_TABLE_MAGIC = "# pixelplanes color table v1"

# 27 neighbor offsets of a cell in the occupancy grid
_OFFSETS = np.array([(a, b, c) for a in (-1, 0, 1) for b in (-1, 0, 1) for c in (-1, 0, 1)])


class ColorSpaceExhausted(RuntimeError):
    pass


class CodecError(ValueError):
    pass


@dataclass
class ColorTable:
    entries: dict[int, tuple[int, int, int]]
    seed: int = 0
    min_separation: int = DEFAULT_MIN_SEPARATION

    def __len__(self):
        return len(self.entries)

    def ids(self) -> np.ndarray:
        return np.array(sorted(self.entries), dtype=np.int64)

    def colors(self) -> np.ndarray:
        """(n, 3) uint8 colors ordered by ascending id."""
        if not self.entries:
            return np.zeros((0, 3), dtype=np.uint8)
        return np.array([self.entries[i] for i in sorted(self.entries)], dtype=np.uint8)

    def lookup(self) -> np.ndarray:
        """Dense id -> color array with row 0 (background) black."""
        top = max(self.entries, default=0)
        lut = np.zeros((top + 1, 3), dtype=np.uint8)
        for i, c in self.entries.items():
            lut[i] = c
        return lut


@dataclass
class ColorTableReport:
    ok: bool
    count: int
    min_distance: float | None
    min_background_distance: float | None
    duplicates: list[tuple[int, int]] = field(default_factory=list)
    too_close: list[tuple[int, int]] = field(default_factory=list)
    near_background: list[int] = field(default_factory=list)
    reserved_id: bool = False


class _ColorSampler:
    """Rejection sampler over the 256^3 byte cube with an occupancy grid.

    Cells have side ``sep`` so each holds at most one accepted color and any
    conflicting color lives in one of the 27 surrounding cells.
    """

    def __init__(self, rng: np.random.Generator, sep: int):
        self.rng = rng
        self.sep = sep
        g = math.ceil(256 / sep)
        self.grid = np.full((g + 2, g + 2, g + 2), -1, dtype=np.int64)
        self.colors: list[tuple[int, int, int]] = []

    def _conflicts_batch(self, cand: np.ndarray) -> np.ndarray:
        cells = cand // self.sep + 1
        bad = cand.max(axis=1) < self.sep  # too close to black
        if not self.colors:
            return bad
        arr = np.asarray(self.colors, dtype=np.int64)
        for off in _OFFSETS:
            c = cells + off
            occ = self.grid[c[:, 0], c[:, 1], c[:, 2]]
            hit = occ >= 0
            if hit.any():
                d = np.abs(arr[occ[hit]] - cand[hit]).max(axis=1)
                bad[np.flatnonzero(hit)[d < self.sep]] = True
        return bad

    def _conflicts_one(self, color: np.ndarray) -> bool:
        base = color // self.sep + 1
        for off in _OFFSETS:
            c = base + off
            j = self.grid[c[0], c[1], c[2]]
            if j >= 0 and max(abs(a - b) for a, b in zip(self.colors[j], color)) < self.sep:
                return True
        return False

    def draw(self, n: int, max_draws: int) -> list[tuple[int, int, int]]:
        drawn = 0
        while len(self.colors) < n:
            if drawn >= max_draws:
                raise ColorSpaceExhausted(
                    f"placed {len(self.colors)} of {n} colors with min_separation={self.sep} "
                    f"after {drawn} draws"
                )
            batch = int(min(max(64, 2 * (n - len(self.colors))), 65536, max_draws - drawn))
            cand = self.rng.integers(0, 256, size=(batch, 3), dtype=np.int64)
            drawn += batch
            keep = cand[~self._conflicts_batch(cand)]
            for color in keep:
                if len(self.colors) == n:
                    break
                if self._conflicts_one(color):
                    continue
                cell = color // self.sep + 1
                self.grid[cell[0], cell[1], cell[2]] = len(self.colors)
                self.colors.append((int(color[0]), int(color[1]), int(color[2])))
        return self.colors


def draw_color_table(
    ids, seed: int, min_separation: int = DEFAULT_MIN_SEPARATION, max_draws: int | None = None
) -> ColorTable:
    """Assign a random separated color to each id, in ascending id order."""
    ids = sorted(int(i) for i in ids)
    if min_separation < 1:
        raise CodecError("min_separation must be >= 1")
    if ids and ids[0] <= 0:
        raise CodecError("id 0 is reserved for background")
    if len(ids) > MAX_ENTITIES or (ids and ids[-1] > MAX_ENTITIES):
        raise CodecError(f"at most {MAX_ENTITIES} entities are supported")
    if max_draws is None:
        max_draws = 200 * len(ids) + 100_000
    rng = np.random.default_rng(np.random.SeedSequence(seed))
    colors = _ColorSampler(rng, int(min_separation)).draw(len(ids), max_draws)
    return ColorTable(dict(zip(ids, colors)), seed=seed, min_separation=int(min_separation))


def encode_segmentation(
    masks: EntityMaskVideo, seed: int, min_separation: int = DEFAULT_MIN_SEPARATION
) -> tuple[VideoTensor, ColorTable]:
    table = draw_color_table(masks.present_ids(), seed, min_separation)
    return render(masks, table), table


def render(masks: EntityMaskVideo, table: ColorTable) -> VideoTensor:
    lut = table.lookup()
    ids = masks.ids
    if ids.size and ids.max() >= len(lut):
        missing = sorted(set(np.unique(ids[ids >= len(lut)]).tolist()))
        raise CodecError(f"ids missing from color table: {missing[:10]}")
    return VideoTensor.from_bytes(lut[ids])


def _min_pairwise_chebyshev(points: np.ndarray) -> float:
    if len(points) < 2:
        return math.inf
    d, _ = cKDTree(points.astype(np.float64)).query(points, k=2, p=np.inf)
    return float(d[:, 1].min())


def _pack(rgb: np.ndarray) -> np.ndarray:
    c = rgb.astype(np.int64)
    return (c[:, 0] << 16) | (c[:, 1] << 8) | c[:, 2]


def _nearest_brute(points, palette, labels, reject_threshold):
    diff = points[:, None, :] - palette[None, :, :]
    cheb = np.abs(diff).max(axis=2)
    best = cheb.min(axis=1)
    eu = np.where(cheb == best[:, None], (diff**2).sum(axis=2), np.inf)
    res = labels[np.argmax(eu == eu.min(axis=1)[:, None], axis=1)]  # first = lowest id
    res[best > reject_threshold] = 0
    return res


def _nearest_labels(points, palette, labels, reject_threshold, chunk):
    """Chebyshev-nearest labels; ties go to smaller Euclidean distance, then lower id.

    ``palette`` rows must be ordered by ascending label.
    """
    k = min(8, len(palette))
    dist, idx = cKDTree(palette).query(points, k=k, p=np.inf)
    dist, idx = dist.reshape(len(points), k), idx.reshape(len(points), k)
    best = dist[:, 0]
    cand = dist == best[:, None]
    eu = np.where(cand, ((points[:, None, :] - palette[idx]) ** 2).sum(axis=2), np.inf)
    # among equal Euclidean distance, prefer the smaller palette index
    key = np.where(eu == eu.min(axis=1)[:, None], idx, len(palette))
    res = labels[key.min(axis=1)]
    res[best > reject_threshold] = 0
    overflow = np.flatnonzero(cand[:, -1]) if k < len(palette) else np.array([], dtype=np.int64)
    for s in range(0, len(overflow), chunk):
        sel = overflow[s : s + chunk]
        res[sel] = _nearest_brute(points[sel], palette, labels, reject_threshold)
    return res


def decode_segmentation(
    video: VideoTensor, table: ColorTable, reject_threshold: float | None = None, chunk: int = 4096
) -> EntityMaskVideo:
    """Nearest-color decoding against the table plus the implicit black background.

    Distances are Chebyshev in byte units; ties fall to the smaller Euclidean
    distance and then to the lowest id. Pixels farther than ``reject_threshold``
    from every entry become background. The default threshold is half of the
    smallest pairwise distance among the entries (background included).
    """
    T, H, W, _ = video.pixels.shape
    if not len(table):
        return EntityMaskVideo(np.zeros((T, H, W), dtype=np.int64), entity_count=0)
    labels = np.concatenate([[0], table.ids()])
    palette = np.vstack([np.zeros((1, 3)), table.colors().astype(np.float64)])
    if reject_threshold is None:
        reject_threshold = 0.5 * _min_pairwise_chebyshev(palette)

    flat = np.round(video.pixels.reshape(-1, 3) * 255.0, 6)
    if np.array_equal(flat, np.floor(flat)) and flat.min(initial=0) >= 0 and flat.max(initial=0) <= 255:
        # byte colors: unique over packed 24-bit keys is much cheaper than row-wise unique
        keys, inverse = np.unique(_pack(flat), return_inverse=True)
        uniq = np.stack([keys >> 16, (keys >> 8) & 255, keys & 255], axis=1).astype(np.float64)
    else:
        uniq, inverse = np.unique(flat, axis=0, return_inverse=True)
        keys = None
    out = np.full(len(uniq), -1, dtype=np.int64)
    if keys is not None and reject_threshold >= 0:
        # exact hits are their own nearest entry (entries are pairwise distinct)
        pkeys = _pack(palette)
        order = np.argsort(pkeys)
        pos = np.clip(np.searchsorted(pkeys[order], keys), 0, len(pkeys) - 1)
        hit = pkeys[order][pos] == keys
        out[hit] = labels[order][pos[hit]]
    todo = np.flatnonzero(out < 0)
    if len(todo):
        out[todo] = _nearest_labels(uniq[todo], palette, labels, reject_threshold, chunk)
    ids = out[inverse.reshape(-1)].reshape(T, H, W)
    return EntityMaskVideo(ids, entity_count=int(labels.max()))


def validate_color_table(table: ColorTable) -> ColorTableReport:
    ids = table.ids()
    cols = table.colors().astype(np.int64)
    sep = table.min_separation
    if len(ids) == 0:
        return ColorTableReport(ok=True, count=0, min_distance=None, min_background_distance=None)

    order = np.lexsort(cols.T[::-1])
    dups = []
    for a, b in zip(order[:-1], order[1:]):
        if np.array_equal(cols[a], cols[b]):
            dups.append(tuple(sorted((int(ids[a]), int(ids[b])))))

    close = []
    if len(ids) > 1 and sep > 1:
        tree = cKDTree(cols.astype(np.float64))
        for a, b in sorted(tree.query_pairs(r=sep - 1, p=np.inf)):
            pair = tuple(sorted((int(ids[a]), int(ids[b]))))
            if pair not in dups:
                close.append(pair)
    bg = cols.max(axis=1)
    near_bg = [int(i) for i, d in zip(ids, bg) if d < sep]
    min_d = _min_pairwise_chebyshev(cols)
    reserved = bool(0 in table.entries)
    ok = not dups and not close and not near_bg and not reserved
    return ColorTableReport(
        ok=ok,
        count=len(ids),
        min_distance=None if math.isinf(min_d) else min_d,
        min_background_distance=float(bg.min()),
        duplicates=sorted(dups),
        too_close=sorted(close),
        near_background=near_bg,
        reserved_id=reserved,
    )


def write_color_table(table: ColorTable, path: str | Path) -> None:
    lines = [
        _TABLE_MAGIC,
        f"seed {table.seed}",
        f"min_separation {table.min_separation}",
        f"count {len(table)}",
    ]
    lines += [f"{i} {r} {g} {b}" for i, (r, g, b) in sorted(table.entries.items())]
    Path(path).write_text("\n".join(lines) + "\n", encoding="ascii")


def read_color_table(path: str | Path) -> ColorTable:
    text = Path(path).read_text(encoding="ascii").splitlines()
    if not text or text[0].strip() != _TABLE_MAGIC:
        raise CodecError(f"{path}: not a color table file")
    header: dict[str, int] = {}
    entries: dict[int, tuple[int, int, int]] = {}
    for lineno, line in enumerate(text[1:], start=2):
        parts = line.split()
        if not parts:
            continue
        try:
            if len(parts) == 2:
                header[parts[0]] = int(parts[1])
            elif len(parts) == 4:
                i, r, g, b = (int(x) for x in parts)
                if not all(0 <= v <= 255 for v in (r, g, b)):
                    raise ValueError("channel out of range")
                entries[i] = (r, g, b)
            else:
                raise ValueError("expected 'key value' or 'id r g b'")
        except ValueError as exc:
            raise CodecError(f"{path}:{lineno}: {exc}") from None
    if "count" in header and header["count"] != len(entries):
        raise CodecError(f"{path}: header count {header['count']} != {len(entries)} entries")
    return ColorTable(
        entries,
        seed=header.get("seed", 0),
        min_separation=header.get("min_separation", DEFAULT_MIN_SEPARATION),
    )


# -- location-aware baseline ---------------------------------------------------


@dataclass(frozen=True)
class ColorGrid:
    """Fixed rows x cols table of cell colors."""

    cell_colors: np.ndarray

    def __post_init__(self):
        c = np.asarray(self.cell_colors)
        if c.ndim != 3 or c.shape[2] != 3 or c.shape[0] < 1 or c.shape[1] < 1:
            raise CodecError(f"cell_colors must have shape (rows, cols, 3), got {c.shape}")
        object.__setattr__(self, "cell_colors", c.astype(np.uint8))

    @property
    def grid_size(self) -> tuple[int, int]:
        return self.cell_colors.shape[0], self.cell_colors.shape[1]

    @classmethod
    def lattice(cls, rows: int = 16, cols: int = 16) -> "ColorGrid":
        """Cells colored row-major from an evenly spaced RGB lattice, black excluded."""
        n = rows * cols
        levels = max(2, math.ceil(n ** (1 / 3) - 1e-9))
        i = np.arange(n)
        lvl = np.stack([i // levels**2, (i // levels) % levels, i % levels], axis=1)
        vals = np.floor((lvl + 1) * 255.0 / levels + 0.5).astype(np.uint8)
        return cls(vals.reshape(rows, cols, 3))


def location_aware_colors(masks: EntityMaskVideo, grid: ColorGrid) -> tuple[dict[int, tuple[int, int, int]], list[int]]:
    """Map each entity to the grid cell holding its first-frame centroid.

    Returns the id -> color map and the ids absent from the first frame.
    """
    first = masks.ids[0]
    H, W = first.shape
    rows, cols = grid.grid_size
    colors: dict[int, tuple[int, int, int]] = {}
    for e in masks.present_ids().tolist():
        ys, xs = np.nonzero(first == e)
        if len(ys) == 0:
            continue
        r = min(int(math.floor(ys.mean() * rows / H)), rows - 1)
        c = min(int(math.floor(xs.mean() * cols / W)), cols - 1)
        colors[e] = tuple(int(v) for v in grid.cell_colors[r, c])
    missing = [e for e in masks.present_ids().tolist() if e not in colors]
    return colors, missing


def encode_segmentation_location_aware(masks: EntityMaskVideo, grid: ColorGrid | None = None) -> VideoTensor:
    grid = grid or ColorGrid.lattice()
    colors, missing = location_aware_colors(masks, grid)
    if missing:
        log.warning("entities absent from first frame rendered as background: %s", missing)
    top = int(masks.ids.max()) if masks.ids.size else 0
    lut = np.zeros((top + 1, 3), dtype=np.uint8)
    for e, c in colors.items():
        lut[e] = c
    return VideoTensor.from_bytes(lut[masks.ids])
