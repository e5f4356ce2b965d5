"""Camera-side operations: grayscale, contrast, 1x1 RoIAlign and its adjoint."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ._rng import XorShift64Star
from .exceptions import ConfigError, DegenerateRoiError, OutOfBoundsError, ShapeError
from .kitti_io import Image

_BOUNDS_TOL = 1e-9


@dataclass(frozen=True)
class GrayImage:
    width: int
    height: int
    data: np.ndarray  # (height, width) uint8


@dataclass(frozen=True, eq=False)
class FeatureMap:
    """Dense camera features, ``data`` shaped ``(height, width, channels)``.

    Cell ``(row, col)`` covers raw pixels ``[col*stride, (col+1)*stride)``
    horizontally; in feature-map units its center sits at ``col + 0.5``.
    """

    data: np.ndarray
    stride: int

    def __post_init__(self):
        data = np.asarray(self.data, dtype=np.float64)
        if data.ndim != 3:
            raise ShapeError(f"feature map must be (H, W, C), got shape {data.shape}")
        if not np.all(np.isfinite(data)):
            raise ShapeError("feature map contains non-finite values")
        object.__setattr__(self, "data", data)

    @property
    def height(self):
        return self.data.shape[0]

    @property
    def width(self):
        return self.data.shape[1]

    @property
    def channels(self):
        return self.data.shape[2]

    @property
    def area(self):
        return float(self.height * self.width)


def feature_map_shape(image_width, image_height, stride):
    """(height, width) of the map a ``stride`` backbone yields; partial blocks count."""
    return math.ceil(image_height / stride), math.ceil(image_width / stride)


def to_grayscale(img: Image) -> GrayImage:
    """Luma ``0.299 R + 0.587 G + 0.114 B``, rounded half up in exact integer arithmetic."""
    rgb = img.data.astype(np.int64)
    gray = (299 * rgb[..., 0] + 587 * rgb[..., 1] + 114 * rgb[..., 2] + 500) // 1000
    return GrayImage(img.width, img.height, np.clip(gray, 0, 255).astype(np.uint8))


def roi_pixel_span(roi_raw, width, height):
    """Inclusive column/row ranges of pixels whose centers lie in ``roi_raw``.

    Returns ``(c0, c1, r0, r1)``; the span is empty when ``c0 > c1`` or ``r0 > r1``.
    """
    u_min, v_min, u_max, v_max = roi_raw[:4]
    c0 = max(math.ceil(u_min - 0.5), 0)
    c1 = min(math.floor(u_max - 0.5), width - 1)
    r0 = max(math.ceil(v_min - 0.5), 0)
    r1 = min(math.floor(v_max - 0.5), height - 1)
    return c0, c1, r0, r1


def michelson_contrast(gray: GrayImage, roi_raw) -> float:
    """``(I_max - I_min) / (I_max + I_min)`` over the covered pixels; 0 for an all-black patch."""
    c0, c1, r0, r1 = roi_pixel_span(roi_raw, gray.width, gray.height)
    if c0 > c1 or r0 > r1:
        raise DegenerateRoiError(f"ROI {tuple(roi_raw[:4])} covers no pixel center")
    patch = gray.data[r0 : r1 + 1, c0 : c1 + 1]
    return _michelson(int(patch.max()), int(patch.min()))


def _michelson(hi, lo):
    if hi + lo == 0:
        return 0.0
    return (hi - lo) / (hi + lo)


def _check_rois_inside(rois, height, width):
    rois = np.atleast_2d(np.asarray(rois, dtype=np.float64))
    lo_bad = (rois[:, 0] < -_BOUNDS_TOL) | (rois[:, 1] < -_BOUNDS_TOL)
    hi_bad = (rois[:, 2] > width + _BOUNDS_TOL) | (rois[:, 3] > height + _BOUNDS_TOL)
    order_bad = (rois[:, 2] < rois[:, 0]) | (rois[:, 3] < rois[:, 1])
    bad = np.flatnonzero(lo_bad | hi_bad | order_bad)
    if bad.size:
        r = rois[bad[0], :4]
        raise OutOfBoundsError(f"ROI {tuple(r)} lies outside the {width}x{height} feature map")
    return rois


def sampling_weights(rois, height, width, samples=4):
    """Flat cell indices and bilinear weights for 1x1 RoIAlign.

    Returns ``(cells, weights)``, both shaped ``(N, samples * 4)``. The
    aligned feature of ROI ``n`` is ``sum_k weights[n, k] * flat[cells[n, k]]``;
    the scatter-back is the transpose of the same sum. Each row of weights
    sums to 1.
    """
    rois = _check_rois_inside(np.asarray(rois, dtype=np.float64), height, width)
    u_min, v_min, u_max, v_max = (rois[:, i] for i in range(4))
    if samples == 4:
        fracs = np.array([0.25, 0.75])
    elif samples == 1:
        fracs = np.array([0.5])
    else:
        raise ConfigError(f"RoIAlign supports 1 or 4 samples, got {samples}")
    su = u_min[:, None] + (u_max - u_min)[:, None] * fracs[None, :]
    sv = v_min[:, None] + (v_max - v_min)[:, None] * fracs[None, :]
    # (N, S) sample grid, v-major then u
    su = np.repeat(su[:, None, :], len(fracs), axis=1).reshape(len(rois), -1)
    sv = np.repeat(sv[:, :, None], len(fracs), axis=2).reshape(len(rois), -1)

    x = np.clip(su - 0.5, 0.0, width - 1)
    y = np.clip(sv - 0.5, 0.0, height - 1)
    x0 = np.floor(x).astype(np.int64)
    y0 = np.floor(y).astype(np.int64)
    x1 = np.minimum(x0 + 1, width - 1)
    y1 = np.minimum(y0 + 1, height - 1)
    wx = x - x0
    wy = y - y0
    share = 1.0 / su.shape[1]
    cells = np.stack([y0 * width + x0, y0 * width + x1, y1 * width + x0, y1 * width + x1], axis=2)
    weights = np.stack(
        [(1 - wy) * (1 - wx), (1 - wy) * wx, wy * (1 - wx), wy * wx], axis=2
    ) * share
    return cells.reshape(len(rois), -1), weights.reshape(len(rois), -1)


def roi_align_batch(fmap: FeatureMap, rois, samples=4) -> np.ndarray:
    """1x1 RoIAlign for many ROIs at once, shape ``(N, C)``."""
    rois = np.atleast_2d(np.asarray(rois, dtype=np.float64))
    cells, weights = sampling_weights(rois, fmap.height, fmap.width, samples)
    flat = fmap.data.reshape(-1, fmap.channels)
    return np.einsum("nk,nkc->nc", weights, flat[cells])


def roi_align_1x1(fmap: FeatureMap, roi, samples=4) -> np.ndarray:
    box = np.asarray(_roi_tuple(roi), dtype=np.float64)[None]
    return roi_align_batch(fmap, box, samples)[0]


def scatter_roi_align(data, rois, values, samples=4):
    """Add the RoIAlign adjoint of ``values`` (N, C) into ``data`` (H, W, C) in place.

    Deposits happen in ROI order, then sample order, so the float result is
    reproducible bit for bit.
    """
    height, width, channels = data.shape
    cells, weights = sampling_weights(rois, height, width, samples)
    flat = data.reshape(-1, channels)
    contrib = weights[:, :, None] * np.asarray(values)[:, None, :]
    np.add.at(flat, cells.reshape(-1), contrib.reshape(-1, channels))
    return data


def scatter_center_cell(data, rois, values):
    """Write each value to the single cell holding its ROI center."""
    height, width, channels = data.shape
    rois = _check_rois_inside(np.asarray(rois, dtype=np.float64), height, width)
    cu = np.clip(np.floor((rois[:, 0] + rois[:, 2]) / 2), 0, width - 1).astype(np.int64)
    cv = np.clip(np.floor((rois[:, 1] + rois[:, 3]) / 2), 0, height - 1).astype(np.int64)
    flat = data.reshape(-1, channels)
    np.add.at(flat, cv * width + cu, np.asarray(values))
    return data


def _roi_tuple(roi):
    if hasattr(roi, "u_min"):
        return (roi.u_min, roi.v_min, roi.u_max, roi.v_max)
    return tuple(roi[:4])


def backbone_weights(c_p, seed):
    rng = XorShift64Star(seed, "camera_backbone")
    weight = rng.uniform(-1.0, 1.0, (c_p, 3))
    bias = rng.uniform(-1.0, 1.0, (c_p,))
    return weight, bias


def average_pool_rgb(img: Image, stride):
    """Mean of RGB/255 over each ``stride x stride`` block, shape ``(H', W', 3)``."""
    h, w = feature_map_shape(img.width, img.height, stride)
    rgb = img.data.astype(np.float64) / 255.0
    padded = np.zeros((h * stride, w * stride, 3))
    padded[: img.height, : img.width] = rgb
    mask = np.zeros((h * stride, w * stride))
    mask[: img.height, : img.width] = 1.0
    sums = padded.reshape(h, stride, w, stride, 3).sum(axis=(1, 3))
    counts = mask.reshape(h, stride, w, stride).sum(axis=(1, 3))
    return sums / counts[..., None]


def surrogate_camera_backbone(img: Image, stride=4, c_p=64, seed=0) -> FeatureMap:
    """Deterministic stand-in for a trained 2D backbone: pool, seeded affine, tanh."""
    if stride not in (1, 2, 4, 8):
        raise ConfigError(f"stride must be one of 1, 2, 4, 8, got {stride}")
    if c_p < 3:
        raise ConfigError(f"c_p must be at least 3, got {c_p}")
    pooled = average_pool_rgb(img, stride)
    weight, bias = backbone_weights(c_p, seed)
    return FeatureMap(np.tanh(pooled @ weight.T + bias), stride)
