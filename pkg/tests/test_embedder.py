import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import ndimage

from adasiam.embedder import (
    CorrelationConfig,
    FeatureMap,
    HandcraftedEmbedder,
    IdentityEmbedder,
    ScoreMap,
    cosine_window,
    cross_correlate,
    peak,
    score_to_bbox,
)
from adasiam.geometry import BoundingBox
from adasiam.sequence_io import Patch

RAW = CorrelationConfig(bias=0.0, window_weight=0.0, normalize=False)
NCC = CorrelationConfig(bias=0.0, window_weight=0.0, normalize=True)


def patch(arr):
    arr = np.asarray(arr, dtype=np.float64)
    if arr.ndim == 2:
        arr = arr[:, :, None]
    return Patch(arr, BoundingBox(0, 0, arr.shape[1], arr.shape[0]), 0.0)


def brute_force(t, s):
    c, th, tw = t.shape
    _, sh, sw = s.shape
    out = np.zeros((sh - th + 1, sw - tw + 1))
    for r in range(out.shape[0]):
        for q in range(out.shape[1]):
            acc = 0.0
            for k in range(c):
                for i in range(th):
                    for j in range(tw):
                        acc += t[k, i, j] * s[k, r + i, q + j]
            out[r, q] = acc
    return out


def test_uniform_patch_has_zero_gradients():
    fm = HandcraftedEmbedder(stride=4).embed(patch(np.full((64, 64), 0.3)))
    assert fm.values.shape == (3, 16, 16)
    assert np.all(fm.values[1:] == 0.0)
    np.testing.assert_allclose(fm.values[0], 0.3)


def test_embed_is_deterministic():
    rng = np.random.default_rng(0)
    p = patch(rng.random((64, 64, 3)))
    a, b = HandcraftedEmbedder().embed(p), HandcraftedEmbedder().embed(p)
    assert np.array_equal(a.values, b.values)


def test_vertical_edge_peaks_in_horizontal_gradient():
    img = np.zeros((8, 8))
    img[:, 5:] = 1.0
    fm = HandcraftedEmbedder(stride=2).embed(patch(img))
    # central differences are 0.5 at columns 4 and 5, which pool into cell 2
    np.testing.assert_allclose(fm.values[1], np.tile([0.0, 0.0, 0.5, 0.0], (4, 1)))
    np.testing.assert_allclose(fm.values[2], 0.0)


def test_identity_embedder_is_channels_first():
    rng = np.random.default_rng(1)
    arr = rng.random((6, 5, 2))
    fm = IdentityEmbedder(channels=2).embed(patch(arr))
    assert np.array_equal(fm.values, np.moveaxis(arr, 2, 0))


def test_self_match_peaks_exactly():
    rng = np.random.default_rng(2)
    s = rng.random((3, 12, 12))
    t = s[:, 4:9, 2:7]
    smap = cross_correlate(FeatureMap(t, 1), FeatureMap(s, 1), NCC)
    assert peak(smap) == (4, 2)
    assert smap.values[4, 2] == pytest.approx(1.0)


def test_all_zero_search_with_bias():
    rng = np.random.default_rng(3)
    smap = cross_correlate(FeatureMap(rng.random((3, 4, 4)), 1), FeatureMap(np.zeros((3, 9, 9)), 1), CorrelationConfig(bias=0.3, window_weight=0.0))
    np.testing.assert_array_equal(smap.values, np.full((6, 6), 0.3))


def test_hand_computed_two_by_two():
    t = np.array([[[1.0, 2.0], [3.0, 4.0]]])
    s = np.arange(9.0).reshape(1, 3, 3)
    smap = cross_correlate(FeatureMap(t, 1), FeatureMap(s, 1), RAW)
    # window (0,0) = [[0,1],[3,4]] -> 0+2+9+16
    np.testing.assert_array_equal(smap.values, [[27.0, 37.0], [57.0, 67.0]])


@given(st.integers(1, 3), st.integers(1, 4), st.integers(1, 4), st.integers(0, 4), st.integers(0, 4), st.integers(0, 2**31))
def test_raw_matches_brute_force(c, th, tw, dh, dw, seed):
    rng = np.random.default_rng(seed)
    t = rng.standard_normal((c, th, tw))
    s = rng.standard_normal((c, th + dh, tw + dw))
    smap = cross_correlate(FeatureMap(t, 1), FeatureMap(s, 1), RAW)
    assert smap.values.shape == (dh + 1, dw + 1)
    np.testing.assert_allclose(smap.values, brute_force(t, s), atol=1e-9)


@given(st.integers(0, 2**31), st.floats(-3, 3), st.floats(0.0, 1.0))
def test_normalized_scores_bounded(seed, bias, lam):
    rng = np.random.default_rng(seed)
    t = rng.standard_normal((3, 4, 4))
    s = rng.standard_normal((3, 8, 8))
    smap = cross_correlate(FeatureMap(t, 1), FeatureMap(s, 1), CorrelationConfig(bias, lam, True))
    assert np.all(smap.values - bias <= 1.0 + 1e-12)
    assert np.all(smap.values - bias >= -1.0 - 1e-12)


@given(st.integers(0, 2**31), st.floats(-5, 5))
def test_raw_correlation_is_bilinear(seed, k):
    rng = np.random.default_rng(seed)
    t = rng.standard_normal((2, 3, 3))
    s = rng.standard_normal((2, 7, 6))
    cfg = CorrelationConfig(bias=0.7, window_weight=0.0, normalize=False)
    a = cross_correlate(FeatureMap(t, 1), FeatureMap(s, 1), cfg).values - 0.7
    b = cross_correlate(FeatureMap(k * t, 1), FeatureMap(s, 1), cfg).values - 0.7
    np.testing.assert_allclose(b, k * a, atol=1e-9)


def test_shape_mismatches_rejected():
    a = FeatureMap(np.zeros((3, 4, 4)), 4)
    with pytest.raises(ValueError):
        cross_correlate(a, FeatureMap(np.zeros((2, 8, 8)), 4))
    with pytest.raises(ValueError):
        cross_correlate(a, FeatureMap(np.zeros((3, 8, 8)), 2))
    with pytest.raises(ValueError):
        cross_correlate(a, FeatureMap(np.zeros((3, 3, 8)), 4))


def test_cosine_window_shape_and_peak():
    w = cosine_window(17, 17)
    assert w[8, 8] == 1.0 and w[0, 0] == 0.0
    assert np.array_equal(cosine_window(1, 1), np.ones((1, 1)))


def test_window_blend_is_multiplicative():
    rng = np.random.default_rng(4)
    t = FeatureMap(rng.random((3, 4, 4)), 1)
    s = FeatureMap(rng.random((3, 10, 10)), 1)
    plain = cross_correlate(t, s, NCC).values
    blended = cross_correlate(t, s, CorrelationConfig(0.0, 0.2, True)).values
    np.testing.assert_allclose(blended, plain * (0.8 + 0.2 * cosine_window(7, 7)))


# -- decoding


def smap_with_peak(r, c, h=17, w=17, stride=4):
    v = np.zeros((h, w))
    v[r, c] = 1.0
    return ScoreMap(v, stride, (-(h - 1) / 2 * stride, -(w - 1) / 2 * stride))


def test_centre_peak_leaves_box():
    box = BoundingBox(10, 20, 30, 40)
    assert score_to_bbox(smap_with_peak(8, 8), box) == box


def test_one_cell_right_moves_one_stride():
    box = BoundingBox(10, 20, 30, 40)
    assert score_to_bbox(smap_with_peak(8, 9), box) == BoundingBox(14, 20, 30, 40)
    assert score_to_bbox(smap_with_peak(8, 9), box, scale=0.5) == BoundingBox(12, 20, 30, 40)


def test_ties_resolve_to_lowest_row_then_column():
    v = np.zeros((5, 5))
    v[3, 1] = v[1, 4] = v[1, 2] = 2.0
    assert peak(ScoreMap(v, 1, (-2.0, -2.0))) == (1, 2)


@given(st.integers(0, 14), st.integers(0, 14), st.integers(1, 4), st.integers(0, 2**31))
def test_self_matched_decode_is_exact(r, c, stride, seed):
    rng = np.random.default_rng(seed)
    s = rng.random((3, 21, 21))
    t = s[:, r:r + 7, c:c + 7]
    smap = cross_correlate(FeatureMap(t, stride), FeatureMap(s, stride), NCC)
    prev = BoundingBox(100, 100, 20, 20)
    got = score_to_bbox(smap, prev)
    assert got == prev.translate((c - 7) * stride, (r - 7) * stride)


def test_translation_equivariance():
    rng = np.random.default_rng(5)
    img = ndimage.gaussian_filter(rng.random((128, 128)), 2.0)
    emb = HandcraftedEmbedder(stride=4)
    template = emb.embed(patch(img[24:88, 28:92]))
    base = cross_correlate(template, emb.embed(patch(img)), NCC)
    shifted = cross_correlate(template, emb.embed(patch(np.roll(img, 4, axis=1))), NCC)
    r, c = peak(base)
    assert (r, c) == (6, 7)
    assert peak(shifted) == (r, c + 1)
    down = cross_correlate(template, emb.embed(patch(np.roll(img, 4, axis=0))), NCC)
    assert peak(down) == (r + 1, c)
