import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from vpfusion import oracles
from vpfusion.exceptions import ConfigError, DegenerateRoiError, OutOfBoundsError
from vpfusion.image_ops import (
    FeatureMap,
    GrayImage,
    average_pool_rgb,
    backbone_weights,
    michelson_contrast,
    roi_align_1x1,
    roi_align_batch,
    sampling_weights,
    scatter_roi_align,
    surrogate_camera_backbone,
    to_grayscale,
)
from vpfusion.kitti_io import Image


def rgb(*pixels):
    return Image(len(pixels), 1, np.array([pixels], dtype=np.uint8))


def test_grayscale_examples():
    g = to_grayscale(rgb((255, 255, 255), (0, 0, 0), (255, 0, 0))).data[0]
    assert g.tolist() == [255, 0, 76]


def test_grayscale_rounds_half_up():
    # 0.587 * 5 + 0.114 * 5 = 3.505 -> 4; 0.299 * 5 = 1.495 -> 1
    assert to_grayscale(rgb((0, 5, 5), (5, 0, 0))).data[0].tolist() == [4, 1]


@settings(max_examples=200, deadline=None)
@given(st.tuples(*[st.integers(0, 255)] * 3), st.integers(0, 2), st.integers(0, 255))
def test_grayscale_monotone(pixel, channel, bump):
    brighter = list(pixel)
    brighter[channel] = max(brighter[channel], bump)
    a, b = to_grayscale(rgb(pixel, tuple(brighter))).data[0]
    assert b >= a
    exact = 0.299 * pixel[0] + 0.587 * pixel[1] + 0.114 * pixel[2]
    assert abs(int(a) - exact) <= 0.5 + 1e-9


def gray(rows):
    data = np.array(rows, dtype=np.uint8)
    return GrayImage(data.shape[1], data.shape[0], data)


def test_contrast_examples():
    assert michelson_contrast(gray([[128, 128], [128, 128]]), (0, 0, 2, 2)) == 0.0
    assert michelson_contrast(gray([[0, 255]]), (0, 0, 2, 1)) == 1.0
    assert michelson_contrast(gray([[100, 200]]), (0, 0, 2, 1)) == pytest.approx(1 / 3, abs=1e-15)
    assert michelson_contrast(gray([[0, 0]]), (0, 0, 2, 1)) == 0.0


def test_contrast_uses_pixel_centres():
    g = gray([[10, 250, 90]])
    assert michelson_contrast(g, (1.4, 0, 1.6, 1)) == 0.0  # only the centre at 1.5
    assert michelson_contrast(g, (0.6, 0, 2.5, 1)) == pytest.approx(160 / 340)
    # centres on the boundary are inside
    assert michelson_contrast(g, (0.5, 0, 2.5, 1)) == pytest.approx(240 / 260)


def test_contrast_empty_span():
    with pytest.raises(DegenerateRoiError):
        michelson_contrast(gray([[1, 2, 3]]), (0.6, 0, 1.4, 1))


@settings(max_examples=100, deadline=None)
@given(st.lists(st.integers(0, 255), min_size=1, max_size=30))
def test_contrast_in_unit_interval(values):
    c = michelson_contrast(gray([values]), (0, 0, len(values), 1))
    assert 0.0 <= c <= 1.0


def fmap(data, stride=1):
    return FeatureMap(np.asarray(data, dtype=np.float64), stride)


def test_align_constant_map():
    m = fmap(np.full((5, 7, 3), 2.5))
    for roi in [(0, 0, 7, 5), (1.3, 0.2, 2.9, 4.4), (6.9, 4.9, 7, 5)]:
        np.testing.assert_array_equal(roi_align_1x1(m, roi), [2.5] * 3)


def test_align_ramp():
    m = fmap([[[0.0], [0.0]], [[1.0], [1.0]]])
    assert roi_align_1x1(m, (0, 0, 2, 2))[0] == 0.5


def test_align_zero_extent_at_cell_centre():
    data = np.random.default_rng(0).normal(size=(4, 5, 2))
    np.testing.assert_allclose(roi_align_1x1(fmap(data), (2.5, 1.5, 2.5, 1.5)), data[1, 2], rtol=1e-15)


def test_align_matches_reference_and_is_bounded():
    rng = np.random.default_rng(1)
    data = rng.normal(size=(6, 9, 1))
    nested = data[:, :, 0].tolist()
    for _ in range(100):
        lo = rng.uniform(0, [9, 6])
        hi = lo + rng.uniform(0, [9, 6] - lo)
        roi = (*lo, *hi)
        got = roi_align_1x1(fmap(data), roi)[0]
        assert got == pytest.approx(oracles.roi_align_reference(nested, roi), abs=1e-13)
        assert data.min() - 1e-12 <= got <= data.max() + 1e-12
        one = roi_align_1x1(fmap(data), roi, samples=1)[0]
        assert one == pytest.approx(oracles.roi_align_reference(nested, roi, samples=1), abs=1e-13)


def test_align_linear_in_map():
    rng = np.random.default_rng(2)
    a, b = rng.normal(size=(2, 5, 6, 3))
    rois = np.column_stack([rng.uniform(0, 3, (20, 2)), rng.uniform(3, 5, (20, 2))])
    rois[:, 2] += 1
    lhs = roi_align_batch(fmap(2.0 * a - 0.5 * b), rois)
    rhs = 2.0 * roi_align_batch(fmap(a), rois) - 0.5 * roi_align_batch(fmap(b), rois)
    np.testing.assert_allclose(lhs, rhs, atol=1e-12)


def test_align_out_of_bounds():
    m = fmap(np.zeros((4, 4, 1)))
    for roi in [(-1, 0, 2, 2), (0, 0, 4.5, 2), (3, 0, 2, 2)]:
        with pytest.raises(OutOfBoundsError):
            roi_align_1x1(m, roi)


def test_sampling_weights_rows_sum_to_one():
    rng = np.random.default_rng(3)
    rois = np.column_stack([rng.uniform(0, 4, (50, 2)), rng.uniform(4, 8, (50, 2))])
    for samples in (1, 4):
        cells, weights = sampling_weights(rois, 8, 8, samples)
        assert cells.shape == weights.shape == (50, samples * 4)
        np.testing.assert_allclose(weights.sum(axis=1), 1.0, rtol=1e-15)
    with pytest.raises(ConfigError):
        sampling_weights(rois, 8, 8, 2)


def test_scatter_is_adjoint_of_align():
    rng = np.random.default_rng(4)
    h, w, c = 5, 7, 3
    rois = np.column_stack([rng.uniform(0, 3, (10, 2)), rng.uniform(3, 5, (10, 2))])
    x = rng.normal(size=(h, w, c))
    y = rng.normal(size=(10, c))
    lhs = np.sum(roi_align_batch(fmap(x), rois) * y)
    rhs = np.sum(x * scatter_roi_align(np.zeros((h, w, c)), rois, y))
    assert lhs == pytest.approx(rhs, rel=1e-12)


def test_backbone_black_image_is_constant():
    m = surrogate_camera_backbone(Image(8, 8, np.zeros((8, 8, 3), dtype=np.uint8)), 4, 6, seed=3)
    assert m.data.shape == (2, 2, 6)
    weight, bias = backbone_weights(6, 3)
    np.testing.assert_array_equal(m.data, np.broadcast_to(np.tanh(bias), (2, 2, 6)))


def test_backbone_matches_direct_recomputation():
    rng = np.random.default_rng(5)
    data = rng.integers(0, 256, (10, 13, 3), dtype=np.uint8)
    m = surrogate_camera_backbone(Image(13, 10, data), 4, 5, seed=1)
    assert (m.height, m.width) == (3, 4)
    weight, bias = backbone_weights(5, 1)
    for r in range(3):
        for c in range(4):
            block = data[4 * r : 4 * r + 4, 4 * c : 4 * c + 4].reshape(-1, 3) / 255.0
            np.testing.assert_allclose(m.data[r, c], np.tanh(weight @ block.mean(axis=0) + bias), rtol=1e-13)


def test_backbone_deterministic_and_checked():
    img = Image(8, 8, np.random.default_rng(6).integers(0, 256, (8, 8, 3), dtype=np.uint8))
    np.testing.assert_array_equal(surrogate_camera_backbone(img, 2, 4, 7).data, surrogate_camera_backbone(img, 2, 4, 7).data)
    assert not np.array_equal(surrogate_camera_backbone(img, 2, 4, 7).data, surrogate_camera_backbone(img, 2, 4, 8).data)
    with pytest.raises(ConfigError):
        surrogate_camera_backbone(img, 3, 4)
    with pytest.raises(ConfigError):
        surrogate_camera_backbone(img, 2, 2)


def test_average_pool_partial_blocks():
    data = np.full((3, 5, 3), 51, dtype=np.uint8)
    pooled = average_pool_rgb(Image(5, 3, data), 2)
    assert pooled.shape == (2, 3, 3)
    np.testing.assert_allclose(pooled, 0.2, rtol=1e-15)


def test_feature_map_rejects_non_finite():
    with pytest.raises(ValueError):
        FeatureMap(np.array([[[np.inf]]]), 1)
