import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from pixelplanes.media_io import DepthVideo, EntityMaskVideo, ManifestRecord, VideoTensor, write_mask_video
from pixelplanes.metrics import (
    FeatureSequence,
    MetricError,
    affine_fit,
    align_depth,
    background_consistency,
    delta_accuracy,
    entity_count_histogram,
    frame_consistency,
    frechet_distance,
    frechet_from_stats,
    mean_abs_acceleration,
    motion_smoothness,
    read_features,
    report_lines,
    rmse,
    subject_consistency,
    write_features,
)


def cos(a, b):
    return sum(x * y for x, y in zip(a, b)) / math.sqrt(sum(x * x for x in a) * sum(y * y for y in b))


# -- consistency -------------------------------------------------------------------


def test_identical_frames_give_one():
    f = np.tile(np.array([[0.3, -1.0, 2.0]]), (5, 1))
    assert subject_consistency(f) == 1.0
    assert background_consistency(f) == 1.0


def test_orthogonal_frames_give_zero():
    f = np.eye(4)[[0, 1]]
    assert frame_consistency(f) == 0.0


def test_four_frame_hand_expansion():
    f = np.random.default_rng(7).random((4, 6)) + 0.1
    want = (
        0.5 * (cos(f[0], f[1]) + cos(f[0], f[1]))
        + 0.5 * (cos(f[0], f[2]) + cos(f[1], f[2]))
        + 0.5 * (cos(f[0], f[3]) + cos(f[2], f[3]))
    ) / 3
    assert abs(frame_consistency(f) - want) <= 1e-12


@settings(max_examples=40, deadline=None)
@given(
    f=arrays(np.float64, (5, 4), elements=st.floats(0.01, 10)),
    scales=arrays(np.float64, (5, 1), elements=st.floats(0.1, 100)),
)
def test_consistency_scale_invariant_and_bounded(f, scales):
    a, b = frame_consistency(f), frame_consistency(f * scales)
    assert 0.0 <= a <= 1.0
    assert abs(a - b) <= 1e-12


def test_zero_vector_warns_and_counts_zero(caplog):
    f = np.array([[1.0, 0.0], [0.0, 0.0], [1.0, 0.0]])
    assert frame_consistency(f) == pytest.approx(0.25)
    assert "zero-norm" in caplog.text


def test_consistency_needs_two_frames():
    with pytest.raises(MetricError):
        frame_consistency(np.ones((1, 3)))


# -- motion smoothness -------------------------------------------------------------


def test_static_video_is_smooth():
    v = VideoTensor(np.full((6, 4, 4, 3), 0.37))
    assert motion_smoothness(v) == 1.0


def test_constant_velocity_is_smooth():
    t = np.arange(5)[:, None, None, None] / 8.0
    assert motion_smoothness(np.broadcast_to(t, (5, 2, 2, 3))) == 1.0


def test_alternating_frames_give_zero():
    x = np.zeros((4, 2, 2, 3))
    x[1::2] = 1.0
    assert mean_abs_acceleration(x) == 2.0
    assert motion_smoothness(x) == 0.0


def test_smoothness_loop_oracle():
    x = np.random.default_rng(3).random((5, 3, 2, 3)) * 0.2
    T, H, W, C = x.shape
    total = 0.0
    for t in range(1, T - 1):
        for i in range(H):
            for j in range(W):
                for c in range(C):
                    total += abs(x[t + 1, i, j, c] - 2 * x[t, i, j, c] + x[t - 1, i, j, c])
    A = total / ((T - 2) * H * W * C)
    assert abs(motion_smoothness(x) - (1 - min(1.0, A / 0.5))) <= 1e-12


def test_smoothness_needs_three_frames():
    with pytest.raises(MetricError):
        motion_smoothness(np.zeros((2, 2, 2, 3)))


# -- Frechet -------------------------------------------------------------------------


def test_frechet_identical_sets_zero():
    x = np.random.default_rng(0).normal(size=(50, 6))
    assert frechet_distance(x, x.copy()) == pytest.approx(0.0, abs=1e-9)


def test_frechet_diagonal_closed_form():
    rng = np.random.default_rng(1)
    mu_a, mu_b = rng.normal(size=8), rng.normal(size=8)
    va, vb = rng.uniform(0.1, 3, 8), rng.uniform(0.1, 3, 8)
    want = math.fsum((mu_a - mu_b) ** 2) + math.fsum(va + vb - 2 * np.sqrt(va * vb))
    got = frechet_from_stats(mu_a, np.diag(va), mu_b, np.diag(vb))
    assert abs(got - want) <= 1e-9


def test_frechet_identity_covariance_is_mean_distance():
    mu_a, mu_b = np.array([1.0, 2.0, 3.0]), np.array([0.0, 0.0, -1.0])
    eye = np.eye(3)
    assert frechet_from_stats(mu_a, eye, mu_b, eye) == pytest.approx(1 + 4 + 16, abs=1e-12)


def test_frechet_symmetric():
    rng = np.random.default_rng(2)
    a, b = rng.normal(size=(40, 5)), rng.normal(1.0, 2.0, size=(30, 5))
    assert frechet_distance(a, b) == pytest.approx(frechet_distance(b, a), rel=1e-9)


def test_frechet_pools_sequences():
    rng = np.random.default_rng(5)
    seqs = [FeatureSequence(rng.normal(size=(4, 3))) for _ in range(6)]
    pooled = np.vstack([s.vectors for s in seqs])
    other = rng.normal(size=(20, 3))
    assert frechet_distance(seqs, other) == frechet_distance(pooled, other)


def test_frechet_rejects_indefinite_covariance():
    with pytest.raises(MetricError, match="indefinite"):
        frechet_from_stats(np.zeros(2), np.diag([1.0, -1.0]), np.zeros(2), np.eye(2))


def test_frechet_tolerates_roundoff_negative_eigenvalue():
    cov = np.diag([1.0, -1e-12])
    assert math.isfinite(frechet_from_stats(np.zeros(2), cov, np.zeros(2), cov))


def test_frechet_dimension_mismatch():
    with pytest.raises(MetricError):
        frechet_distance(np.zeros((4, 3)), np.zeros((4, 2)))


# -- depth metrics ----------------------------------------------------------------------


def _depth_pair(seed):
    rng = np.random.default_rng(seed)
    gt = rng.uniform(0.0, 1.0, (3, 7, 9))
    gt[rng.random(gt.shape) < 0.1] = 0.0
    pred = np.clip(gt * rng.uniform(0.6, 1.6, gt.shape), 0.0, 1.0)
    pred[rng.random(gt.shape) < 0.05] = 0.0
    return pred, gt


@pytest.mark.parametrize("seed", range(5))
def test_delta_counting_oracle(seed):
    pred, gt = _depth_pair(seed)
    hits = total = 0
    for p, g in zip(pred.ravel().tolist(), gt.ravel().tolist()):
        if g <= 0:
            continue
        total += 1
        ratio = math.inf if p <= 0 else max(p / g, g / p)
        hits += ratio < 1.25
    assert delta_accuracy(pred, gt) == hits / total


@pytest.mark.parametrize("seed", range(5))
def test_rmse_two_pass_oracle(seed):
    pred, gt = _depth_pair(seed)
    sq = [(p - g) ** 2 for p, g in zip(pred.ravel().tolist(), gt.ravel().tolist())]
    assert rmse(pred, gt) == pytest.approx(math.sqrt(math.fsum(sq) / len(sq)), rel=1e-13)


def test_delta_and_rmse_trivial():
    d = DepthVideo(np.random.default_rng(0).uniform(0.1, 1, (2, 4, 4)))
    assert delta_accuracy(d, d) == 1.0
    assert rmse(d, d) == 0.0


def test_delta_symmetric_on_positive_inputs():
    rng = np.random.default_rng(8)
    a, b = rng.uniform(0.05, 1, (2, 5, 5)), rng.uniform(0.05, 1, (2, 5, 5))
    assert delta_accuracy(a, b) == delta_accuracy(b, a)


def test_delta_threshold_is_strict():
    assert delta_accuracy(np.array([[1.25]]), np.array([[1.0]])) == 0.0


def test_delta_all_zero_gt():
    with pytest.raises(MetricError):
        delta_accuracy(np.ones((1, 2, 2)), np.zeros((1, 2, 2)))


@settings(max_examples=40, deadline=None)
@given(
    a=arrays(np.float64, (12,), elements=st.floats(0, 1)),
    b=arrays(np.float64, (12,), elements=st.floats(0, 1)),
    c=arrays(np.float64, (12,), elements=st.floats(0, 1)),
)
def test_rmse_is_a_metric(a, b, c):
    assert rmse(a, b) == rmse(b, a)
    assert rmse(a, c) <= rmse(a, b) + rmse(b, c) + 1e-12


def test_affine_fit_recovers_exact_map():
    p = np.random.default_rng(4).random((2, 5, 5))
    a, b = affine_fit(p, 0.5 * p + 0.2)
    assert a == pytest.approx(0.5, abs=1e-12) and b == pytest.approx(0.2, abs=1e-12)


def test_affine_fit_grid_search_oracle():
    rng = np.random.default_rng(6)
    p = rng.random(200)
    g = 0.7 * p + 0.1 + rng.normal(0, 0.05, 200)
    a, b = affine_fit(p, g)
    best = min(float(np.sum((ai * p + bi - g) ** 2)) for ai in np.linspace(0.4, 1.0, 121) for bi in np.linspace(-0.1, 0.3, 81))
    assert float(np.sum((a * p + b - g) ** 2)) <= best + 1e-12


def test_align_clamps_and_improves():
    rng = np.random.default_rng(9)
    gt = rng.random((2, 6, 6))
    pred = 3.0 * gt - 1.0
    aligned = align_depth(pred, gt)
    assert np.allclose(aligned.depth, gt, atol=1e-12)
    assert rmse(aligned, gt) <= rmse(np.clip(pred, 0, 1), gt)


def test_align_constant_prediction():
    with pytest.raises(MetricError):
        affine_fit(np.full((1, 3, 3), 0.4), np.random.default_rng(0).random((1, 3, 3)))


# -- histogram and files ------------------------------------------------------------------


def test_entity_count_histogram_recount(tmp_path):
    rng = np.random.default_rng(10)
    records, expected = [], {}
    for i in range(9):
        n = int(rng.integers(1, 25))
        ids = rng.integers(0, n + 1, (2, 6, 6))
        ids[0, 0, 0] = n
        write_mask_video(EntityMaskVideo(ids), tmp_path / f"s{i}")
        records.append(ManifestRecord(id=f"v{i}", frames_dir=f"f{i}", caption_long="x", seg_dir=f"s{i}"))
        expected[(n // 10) * 10] = expected.get((n // 10) * 10, 0) + 1
    hist = entity_count_histogram(records, root=tmp_path, bucket=10)
    assert hist == dict(sorted(expected.items()))
    assert sum(hist.values()) == 9


def test_feature_file_roundtrip(tmp_path):
    v = np.random.default_rng(0).normal(size=(5, 7)).astype(np.float32)
    write_features(v, tmp_path / "f.bin")
    back = read_features(tmp_path / "f.bin")
    assert back.vectors.shape == (5, 7)
    assert np.array_equal(back.vectors, v.astype(np.float64))


def test_feature_file_truncated(tmp_path):
    write_features(np.ones((3, 4)), tmp_path / "f.bin")
    raw = (tmp_path / "f.bin").read_bytes()
    (tmp_path / "f.bin").write_bytes(raw[:-3])
    with pytest.raises(MetricError):
        read_features(tmp_path / "f.bin")


def test_report_formats():
    rep = {"delta1": 0.5, "rmse": 0.25}
    assert report_lines(rep) == "delta1: 0.500000\nrmse: 0.250000"
    assert report_lines(rep, "json-lines") == '{"delta1": 0.5, "rmse": 0.25}'
