import logging

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pixelplanes.media_io import EntityMaskVideo, VideoTensor
from pixelplanes.seg_codec import (
    CodecError,
    ColorGrid,
    ColorSpaceExhausted,
    ColorTable,
    decode_segmentation,
    draw_color_table,
    encode_segmentation,
    encode_segmentation_location_aware,
    location_aware_colors,
    read_color_table,
    validate_color_table,
    write_color_table,
)


def brute_min_chebyshev(colors):
    c = np.asarray(colors, dtype=np.int64)
    best = np.inf
    for i in range(len(c)):
        d = np.abs(c[i + 1 :] - c[i]).max(axis=1)
        if len(d):
            best = min(best, d.min())
    return best


def test_single_entity_everywhere():
    m = EntityMaskVideo(np.ones((3, 4, 4), dtype=int))
    video, table = encode_segmentation(m, seed=123)
    assert len(table) == 1
    px = video.to_bytes().reshape(-1, 3)
    assert (px == px[0]).all()
    assert px[0].max() > 0


def test_all_background():
    m = EntityMaskVideo(np.zeros((2, 4, 4), dtype=int))
    video, table = encode_segmentation(m, seed=1)
    assert len(table) == 0
    assert np.all(video.pixels == 0)


def test_300_entities_pairwise_separation():
    ids = np.arange(1, 301).reshape(1, 15, 20)
    video, table = encode_segmentation(EntityMaskVideo(ids), seed=7, min_separation=8)
    cols = table.colors()
    assert len(cols) == 300
    assert len({tuple(c) for c in cols.tolist()}) == 300
    assert brute_min_chebyshev(cols) >= 8
    assert cols.max(axis=1).min() >= 8  # away from black background


def test_deterministic_and_seed_sensitive(rng):
    m = EntityMaskVideo(rng.integers(0, 20, size=(3, 8, 8)))
    v1, t1 = encode_segmentation(m, seed=99)
    v2, t2 = encode_segmentation(m, seed=99)
    _, t3 = encode_segmentation(m, seed=100)
    assert np.array_equal(v1.to_bytes(), v2.to_bytes())
    assert t1.entries == t2.entries
    assert t1.entries != t3.entries


def test_temporal_color_constancy(rng):
    m = EntityMaskVideo(rng.integers(0, 6, size=(5, 10, 10)))
    video, table = encode_segmentation(m, seed=3)
    b = video.to_bytes()
    for e in m.present_ids().tolist():
        colors = {tuple(c) for c in b[m.ids == e].tolist()}
        assert colors == {table.entries[e]}


mask_videos = st.builds(
    lambda seed, frames, n: np.random.default_rng(seed).integers(0, n + 1, size=(frames, 9, 7)),
    st.integers(0, 2**32 - 1),
    st.integers(1, 4),
    st.integers(0, 300),
)


@settings(max_examples=40, deadline=None)
@given(ids=mask_videos, seed=st.integers(0, 2**63 - 1))
def test_roundtrip_property(ids, seed):
    m = EntityMaskVideo(ids)
    video, table = encode_segmentation(m, seed=seed)
    assert decode_segmentation(video, table) == m


@settings(max_examples=40, deadline=None)
@given(ids=mask_videos, seed=st.integers(0, 2**32 - 1), sep=st.integers(2, 16), frac=st.floats(0.0, 0.999))
def test_noise_below_half_separation(ids, seed, sep, frac):
    m = EntityMaskVideo(ids)
    video, table = encode_segmentation(m, seed=seed, min_separation=sep)
    amp = frac * sep / 2.0
    noise = np.random.default_rng(seed).uniform(-amp, amp, size=video.pixels.shape)
    noisy = VideoTensor(np.clip(video.pixels + noise / 255.0, 0.0, 1.0))
    assert decode_segmentation(noisy, table) == m


def test_chebyshev_decoding_beats_euclidean_counterexample():
    # Euclidean nearest-neighbor would pick id 1 here although the per-channel error is only 3
    table = ColorTable({1: (8, 3, 3)}, min_separation=8)
    pixel = VideoTensor(np.full((1, 1, 1, 3), 3 / 255.0))
    assert decode_segmentation(pixel, table).ids.item() == 0
    assert (3**2 * 3) > (5**2)  # squared Euclidean: 27 to black vs 25 to id 1


def test_tie_break_lowest_id():
    table = ColorTable({3: (100, 50, 50), 5: (120, 50, 50)}, min_separation=8)
    pixel = VideoTensor(np.array([110, 50, 50], dtype=float).reshape(1, 1, 1, 3) / 255.0)
    assert decode_segmentation(pixel, table).ids.item() == 3


def test_reject_threshold_to_background():
    table = ColorTable({1: (200, 200, 200), 2: (100, 100, 100)}, min_separation=8)
    far = VideoTensor(np.array([150, 150, 150], dtype=float).reshape(1, 1, 1, 3) / 255.0)
    # nearest entry is 50 away; default threshold is 50 (half of 100) so it is kept
    assert decode_segmentation(far, table).ids.item() == 1
    assert decode_segmentation(far, table, reject_threshold=20).ids.item() == 0


def test_decode_empty_table():
    v = VideoTensor(np.full((2, 3, 3, 3), 0.7))
    assert np.all(decode_segmentation(v, ColorTable({})).ids == 0)


def test_exhaustion():
    with pytest.raises(ColorSpaceExhausted):
        draw_color_table(range(1, 11), seed=0, min_separation=200, max_draws=50_000)


def test_entity_limit():
    with pytest.raises(CodecError):
        draw_color_table(range(1, 65537), seed=0)


def test_table_file_roundtrip(tmp_path, rng):
    m = EntityMaskVideo(rng.integers(0, 40, size=(2, 8, 8)))
    _, table = encode_segmentation(m, seed=11, min_separation=6)
    write_color_table(table, tmp_path / "t.txt")
    back = read_color_table(tmp_path / "t.txt")
    assert back.entries == table.entries
    assert (back.seed, back.min_separation) == (11, 6)


def test_table_file_rejects_garbage(tmp_path):
    p = tmp_path / "t.txt"
    p.write_text("hello\n")
    with pytest.raises(CodecError):
        read_color_table(p)


# -- validation ----------------------------------------------------------------


def test_validate_empty():
    assert validate_color_table(ColorTable({})).ok


def test_validate_duplicate():
    rep = validate_color_table(ColorTable({1: (10, 20, 30), 2: (200, 0, 0), 4: (10, 20, 30)}))
    assert not rep.ok
    assert rep.duplicates == [(1, 4)]


def test_validate_reports_close_and_background():
    rep = validate_color_table(ColorTable({1: (100, 100, 100), 2: (103, 100, 100), 3: (2, 3, 1)}, min_separation=8))
    assert (1, 2) in rep.too_close
    assert rep.near_background == [3]
    assert not rep.ok


def test_validate_thousand_matches_brute_force():
    table = draw_color_table(range(1, 1001), seed=5, min_separation=8)
    rep = validate_color_table(table)
    assert rep.ok
    assert rep.min_distance == brute_min_chebyshev(table.colors())


# -- location-aware baseline -----------------------------------------------------


def test_grid_lattice_is_full_and_not_black():
    g = ColorGrid.lattice(16, 16)
    assert g.grid_size == (16, 16)
    flat = g.cell_colors.reshape(-1, 3)
    assert len({tuple(c) for c in flat.tolist()}) == 256
    assert flat.max(axis=1).min() > 0


def test_entity_in_first_cell():
    ids = np.zeros((3, 32, 32), dtype=int)
    ids[:, 0:2, 0:2] = 1
    grid = ColorGrid.lattice(16, 16)
    v = encode_segmentation_location_aware(EntityMaskVideo(ids), grid)
    b = v.to_bytes()
    for t in range(3):
        assert b[t, 0, 0].tolist() == grid.cell_colors[0, 0].tolist()


def test_centroid_collision_shares_color():
    ids = np.zeros((1, 32, 32), dtype=int)
    ids[0, 10, 10] = 1
    ids[0, 11, 11] = 2
    colors, _ = location_aware_colors(EntityMaskVideo(ids), ColorGrid.lattice(16, 16))
    assert colors[1] == colors[2]


def test_moving_entity_keeps_first_frame_color():
    ids = np.zeros((4, 32, 32), dtype=int)
    for t in range(4):
        ids[t, 0:4, 8 * t : 8 * t + 4] = 1
    grid = ColorGrid.lattice(16, 16)
    b = encode_segmentation_location_aware(EntityMaskVideo(ids), grid).to_bytes()
    first = grid.cell_colors[0, 0].tolist()
    for t in range(4):
        assert b[t, 1, 8 * t + 1].tolist() == first
    # the cell under the entity in the last frame would have assigned a different color
    assert grid.cell_colors[0, 12].tolist() != first


def test_entity_absent_from_first_frame(caplog):
    ids = np.zeros((2, 8, 8), dtype=int)
    ids[1, 2:4, 2:4] = 7
    with caplog.at_level(logging.WARNING):
        v = encode_segmentation_location_aware(EntityMaskVideo(ids), ColorGrid.lattice(4, 4))
    assert np.all(v.pixels == 0)
    assert "7" in caplog.text


def test_tree_search_matches_brute_force_with_ties():
    from pixelplanes.seg_codec import _nearest_brute, _nearest_labels

    rng = np.random.default_rng(0)
    # a crowded low-range palette produces many Chebyshev ties
    pal = np.unique(np.vstack([[0, 0, 0], rng.integers(0, 40, (30, 3))]).astype(float), axis=0)
    labels = np.arange(len(pal))
    pts = rng.integers(-5, 45, (20000, 3)).astype(float)
    for thr in (1e9, 3.0):
        assert np.array_equal(_nearest_labels(pts, pal, labels, thr, 512), _nearest_brute(pts, pal, labels, thr))
