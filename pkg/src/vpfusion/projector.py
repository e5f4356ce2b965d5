"""Voxel -> camera-feature-map pairing and the geometric pair parameters."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .exceptions import DegenerateProjectionError, NotFoundError
from .image_ops import (
    FeatureMap,
    GrayImage,
    _michelson,
    feature_map_shape,
    roi_align_batch,
    roi_pixel_span,
)
from .kitti_io import CalibrationSet
from .voxel_grid import DEFAULT_DENSITY_CAP, VoxelGrid, all_voxel_corners, density_parameters

MIN_DEPTH = 1e-6


@dataclass(frozen=True)
class Roi:
    """Axis-aligned rectangle in feature-map units plus the voxel-center depth (m)."""

    u_min: float
    v_min: float
    u_max: float
    v_max: float
    depth: float

    def as_array(self):
        return np.array([self.u_min, self.v_min, self.u_max, self.v_max, self.depth])

    def scaled(self, factor):
        return (self.u_min * factor, self.v_min * factor, self.u_max * factor, self.v_max * factor)


@dataclass(frozen=True)
class PairingConfig:
    density_cap: int = DEFAULT_DENSITY_CAP
    occlusion_ignore_depth: bool = False
    align_samples: int = 4


@dataclass(frozen=True, eq=False)
class VoxelPixelPair:
    voxel_index: tuple
    voxel_feature: np.ndarray  # b_v, length C_v
    roi: Roi
    pixel_feature: np.ndarray  # b_p, length C_p
    params: np.ndarray  # (p_d, p_o, p_a, p_c)
    point_count: int
    occluder_count: int
    raw_area: float

    @property
    def p_d(self):
        return float(self.params[0])

    @property
    def p_o(self):
        return float(self.params[1])

    @property
    def p_a(self):
        return float(self.params[2])

    @property
    def p_c(self):
        return float(self.params[3])


def project_points(calib: CalibrationSet, xyz) -> np.ndarray:
    """Homogeneous projection of ``(N, 3)`` LiDAR points; returns ``(N, 3)`` of u, v, depth.

    No depth check is made; callers mask ``depth <= MIN_DEPTH`` themselves.
    """
    xyz = np.asarray(xyz, dtype=np.float64)
    mat = calib.velo_to_image()
    y = xyz @ mat[:, :3].T + mat[:, 3]
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.stack([y[..., 0] / y[..., 2], y[..., 1] / y[..., 2], y[..., 2]], axis=-1)


def project_point(calib: CalibrationSet, point):
    u, v, depth = project_points(calib, np.asarray(point, dtype=np.float64)[None])[0]
    if not abs(depth) >= MIN_DEPTH:
        raise DegenerateProjectionError(f"point {tuple(point)} projects with depth {depth:g}")
    return float(u), float(v), float(depth)


def _clip_rois(u_min, v_min, u_max, v_max, fmap_w, fmap_h):
    return (
        np.clip(u_min, 0.0, fmap_w),
        np.clip(v_min, 0.0, fmap_h),
        np.clip(u_max, 0.0, fmap_w),
        np.clip(v_max, 0.0, fmap_h),
    )


def voxel_roi(calib: CalibrationSet, corners, image_size, feature_stride) -> Optional[Roi]:
    """ROI of one voxel on the feature map, or None if it is not visible.

    ``image_size`` is ``(width, height)`` of the raw image. Only corners in
    front of the camera contribute to the rectangle.
    """
    corners = np.asarray(corners, dtype=np.float64)
    fmap_h, fmap_w = feature_map_shape(image_size[0], image_size[1], feature_stride)
    proj = project_points(calib, corners)
    front = proj[:, 2] > MIN_DEPTH
    center_depth = project_points(calib, corners.mean(axis=0)[None])[0, 2]
    if not front.any() or not center_depth > MIN_DEPTH:
        return None
    uv = proj[front, :2] / feature_stride
    u_min, v_min, u_max, v_max = _clip_rois(
        uv[:, 0].min(), uv[:, 1].min(), uv[:, 0].max(), uv[:, 1].max(), fmap_w, fmap_h
    )
    if not (u_max > u_min and v_max > v_min):
        return None
    return Roi(float(u_min), float(v_min), float(u_max), float(v_max), float(center_depth))


def voxel_rois(calib: CalibrationSet, grid: VoxelGrid, image_size, feature_stride):
    """Vectorized :func:`voxel_roi` over every voxel in ``grid``.

    Returns ``(rois, valid)``: an ``(N, 5)`` array of u_min, v_min, u_max,
    v_max, depth and a boolean visibility mask.
    """
    n = len(grid)
    if n == 0:
        return np.zeros((0, 5)), np.zeros(0, dtype=bool)
    fmap_h, fmap_w = feature_map_shape(image_size[0], image_size[1], feature_stride)
    corners = all_voxel_corners(grid)
    proj = project_points(calib, corners.reshape(-1, 3)).reshape(n, 8, 3)
    depth = project_points(calib, corners.mean(axis=1))[:, 2]
    front = proj[..., 2] > MIN_DEPTH
    uv = proj[..., :2] / feature_stride
    big = np.inf
    u = np.where(front, uv[..., 0], big)
    v = np.where(front, uv[..., 1], big)
    u_min, v_min = u.min(axis=1), v.min(axis=1)
    u = np.where(front, uv[..., 0], -big)
    v = np.where(front, uv[..., 1], -big)
    u_max, v_max = u.max(axis=1), v.max(axis=1)
    u_min, v_min, u_max, v_max = _clip_rois(u_min, v_min, u_max, v_max, fmap_w, fmap_h)
    valid = front.any(axis=1) & (depth > MIN_DEPTH) & (u_max > u_min) & (v_max > v_min)
    return np.stack([u_min, v_min, u_max, v_max, depth], axis=1), valid


def raw_area(roi) -> float:
    r = _as_row(roi)
    return float((r[2] - r[0]) * (r[3] - r[1]))


def area_parameter(roi, feature_map_area) -> float:
    """ROI area as a fraction of the feature-map area."""
    return raw_area(roi) / float(feature_map_area)


def _as_row(roi):
    if isinstance(roi, Roi):
        return roi.as_array()
    return np.asarray(roi, dtype=np.float64)


def _as_table(rois):
    if isinstance(rois, np.ndarray):
        return np.asarray(rois, dtype=np.float64).reshape(-1, 5)
    return np.array([_as_row(r) for r in rois], dtype=np.float64).reshape(-1, 5)


def occlusion_counts(rois, ignore_depth=False) -> np.ndarray:
    """Number of nearer ROIs that contain each ROI.

    ROI ``j`` occludes ROI ``i`` when its rectangle contains ``i``'s and, unless
    ``ignore_depth``, its depth is strictly smaller. Candidates are swept in
    depth order, so each ROI is only compared against strictly nearer ones.
    """
    table = _as_table(rois)
    n = len(table)
    counts = np.zeros(n, dtype=np.int64)
    if n == 0:
        return counts
    u0, v0, u1, v1, depth = (np.ascontiguousarray(table[:, k]) for k in range(5))
    if ignore_depth:
        for i in range(n):
            inside = (u0 <= u0[i]) & (v0 <= v0[i]) & (u1 >= u1[i]) & (v1 >= v1[i])
            counts[i] = np.count_nonzero(inside) - 1
        return counts
    order = np.argsort(depth, kind="stable")
    su0, sv0, su1, sv1, sd = u0[order], v0[order], u1[order], v1[order], depth[order]
    nearer = np.searchsorted(sd, sd, side="left")
    for k in range(n):
        m = nearer[k]
        if m == 0:
            continue
        inside = (su0[:m] <= su0[k]) & (sv0[:m] <= sv0[k]) & (su1[:m] >= su1[k]) & (sv1[:m] >= sv1[k])
        counts[order[k]] = np.count_nonzero(inside)
    return counts


def squash_count(count):
    return count / (1.0 + count)


def occlusion_parameter(rois: Sequence, index: int, ignore_depth=False) -> float:
    table = _as_table(rois)
    if not 0 <= index < len(table):
        raise NotFoundError(f"ROI index {index} out of range for {len(table)} ROIs")
    target = table[index]
    others = np.delete(table, index, axis=0)
    inside = (
        (others[:, 0] <= target[0])
        & (others[:, 1] <= target[1])
        & (others[:, 2] >= target[2])
        & (others[:, 3] >= target[3])
    )
    if not ignore_depth:
        inside &= others[:, 4] < target[4]
    return squash_count(int(np.count_nonzero(inside)))


def contrast_for_roi(gray: GrayImage, roi_raw) -> float:
    """Michelson contrast of a raw-image ROI, 0 when it covers no pixel center.

    A feature-map ROI thinner than one raw pixel can miss every pixel center.
    It then sees at most one intensity, so its contrast is taken as 0.
    """
    c0, c1, r0, r1 = roi_pixel_span(roi_raw, gray.width, gray.height)
    if c0 > c1 or r0 > r1:
        return 0.0
    patch = gray.data[r0 : r1 + 1, c0 : c1 + 1]
    return _michelson(int(patch.max()), int(patch.min()))


def build_pairs(
    grid: VoxelGrid,
    calib: CalibrationSet,
    camera_map: FeatureMap,
    gray: GrayImage,
    config: PairingConfig = PairingConfig(),
) -> list[VoxelPixelPair]:
    """Pair every visible voxel with its 1x1 RoIAlign pixel feature.

    Output follows the grid's ascending lexicographic voxel order.
    """
    stride = camera_map.stride
    rois, valid = voxel_rois(calib, grid, (gray.width, gray.height), stride)
    keep = np.flatnonzero(valid)
    if keep.size == 0:
        return []
    rois = rois[keep]
    p_d = density_parameters(grid, config.density_cap)[keep]
    areas = (rois[:, 2] - rois[:, 0]) * (rois[:, 3] - rois[:, 1])
    p_a = areas / camera_map.area
    occluders = occlusion_counts(rois, config.occlusion_ignore_depth)
    p_o = squash_count(occluders)
    p_c = np.array([contrast_for_roi(gray, r[:4] * stride) for r in rois])
    b_p = roi_align_batch(camera_map, rois[:, :4], config.align_samples)
    counts = grid.counts[keep]

    pairs = []
    for row, n in enumerate(keep):
        r = rois[row]
        pairs.append(
            VoxelPixelPair(
                voxel_index=tuple(int(i) for i in grid.indices[n]),
                voxel_feature=grid.features[n],
                roi=Roi(*(float(x) for x in r)),
                pixel_feature=b_p[row],
                params=np.array([p_d[row], p_o[row], p_a[row], p_c[row]]),
                point_count=int(counts[row]),
                occluder_count=int(occluders[row]),
                raw_area=float(areas[row]),
            )
        )
    return pairs
