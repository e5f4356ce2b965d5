"""Sparse voxelization of a LiDAR point cloud."""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

from ._rng import XorShift64Star
from .exceptions import ConfigError, NotFoundError
from .kitti_io import PointCloud

DEFAULT_DENSITY_CAP = 35


@dataclass(frozen=True)
class GridConfig:
    """Voxel grid geometry. The effective cell size is ``base_voxel_size * stride``."""

    range_min: tuple = (0.0, -40.0, -3.0)
    range_max: tuple = (70.4, 40.0, 1.0)
    base_voxel_size: tuple = (0.05, 0.05, 0.1)
    stride: int = 4

    def __post_init__(self):
        lo = np.asarray(self.range_min, dtype=float)
        hi = np.asarray(self.range_max, dtype=float)
        size = np.asarray(self.base_voxel_size, dtype=float)
        if lo.shape != (3,) or hi.shape != (3,) or size.shape != (3,):
            raise ConfigError("grid ranges and voxel size must be 3-vectors")
        if not np.all(hi > lo):
            raise ConfigError(f"grid range_max {tuple(hi)} must exceed range_min {tuple(lo)}")
        if not np.all(size > 0):
            raise ConfigError(f"base_voxel_size must be positive, got {tuple(size)}")
        if self.stride not in (1, 2, 4, 8):
            raise ConfigError(f"stride must be one of 1, 2, 4, 8, got {self.stride}")
        object.__setattr__(self, "range_min", tuple(float(x) for x in lo))
        object.__setattr__(self, "range_max", tuple(float(x) for x in hi))
        object.__setattr__(self, "base_voxel_size", tuple(float(x) for x in size))

    @property
    def voxel_size(self):
        return np.asarray(self.base_voxel_size) * self.stride


@dataclass(frozen=True)
class Voxel:
    point_indices: np.ndarray
    feature: np.ndarray


@dataclass(frozen=True, eq=False)
class VoxelGrid:
    """Non-empty voxels in ascending lexicographic index order.

    Point membership is stored CSR-style: the points of voxel ``n`` are
    ``point_indices[offsets[n]:offsets[n + 1]]``, in original cloud order.
    """

    config: GridConfig
    cloud: PointCloud
    indices: np.ndarray  # (N, 3) int64
    point_indices: np.ndarray
    offsets: np.ndarray  # (N + 1,)
    features: np.ndarray  # (N, c_v)
    feature_seed: int = 0
    _lookup: dict = field(default_factory=dict, repr=False)

    def __len__(self):
        return self.indices.shape[0]

    @property
    def counts(self):
        return np.diff(self.offsets)

    @property
    def c_v(self):
        return self.features.shape[1]

    def position(self, index) -> int:
        """Row of ``index`` in :attr:`indices`; raises NotFoundError if empty."""
        key = tuple(int(i) for i in index)
        try:
            return self._lookup[key]
        except KeyError:
            raise NotFoundError(f"voxel {key} is not present in the grid") from None

    def points_of(self, index):
        n = self.position(index)
        return self.point_indices[self.offsets[n] : self.offsets[n + 1]]

    @property
    def voxels(self) -> Mapping[tuple, Voxel]:
        return {
            tuple(int(i) for i in idx): Voxel(
                self.point_indices[self.offsets[n] : self.offsets[n + 1]], self.features[n]
            )
            for n, idx in enumerate(self.indices)
        }

    def feature_dict(self):
        return {tuple(int(i) for i in idx): self.features[n] for n, idx in enumerate(self.indices)}


def voxel_coordinates(xyz, config: GridConfig):
    """Integer voxel index per point and the in-range mask."""
    lo = np.asarray(config.range_min)
    hi = np.asarray(config.range_max)
    inside = np.all((xyz >= lo) & (xyz < hi), axis=1)
    coords = np.floor((xyz - lo) / config.voxel_size).astype(np.int64)
    return coords, inside


def voxelize(cloud: PointCloud, config: GridConfig, c_v: int = 64, seed: int = 0) -> VoxelGrid:
    """Bin ``cloud`` into the sparse grid and attach surrogate features of width ``c_v``."""
    if c_v < 4:
        raise ConfigError(f"c_v must be at least 4, got {c_v}")
    coords, inside = voxel_coordinates(cloud.xyz, config)
    kept = np.flatnonzero(inside)
    if kept.size == 0:
        indices = np.zeros((0, 3), dtype=np.int64)
        inverse = np.zeros(0, dtype=np.int64)
    else:
        indices, inverse = np.unique(coords[kept], axis=0, return_inverse=True)
        inverse = inverse.reshape(-1)
    order = np.argsort(inverse, kind="stable")
    point_indices = kept[order]
    counts = np.bincount(inverse, minlength=len(indices))
    offsets = np.concatenate([[0], np.cumsum(counts)]).astype(np.int64)

    means = _member_means(cloud, indices, inverse, kept, counts, config)
    features = _expand_features(means, c_v, seed)
    for arr in (indices, point_indices, offsets, features):
        arr.setflags(write=False)
    lookup = {tuple(int(i) for i in idx): n for n, idx in enumerate(indices)}
    return VoxelGrid(config, cloud, indices, point_indices, offsets, features, seed, lookup)


def voxel_centers(indices, config: GridConfig):
    size = config.voxel_size
    return np.asarray(config.range_min) + (np.asarray(indices, dtype=np.float64) + 0.5) * size


def _member_means(cloud, indices, inverse, kept, counts, config):
    n = len(indices)
    means = np.zeros((n, 4))
    if n == 0:
        return means
    pts = cloud.points[kept]
    for c in range(4):
        means[:, c] = np.bincount(inverse, weights=pts[:, c], minlength=n) / counts
    means[:, :3] -= voxel_centers(indices, config)
    return means


def _expand_features(base, c_v, seed):
    """First four channels verbatim, the rest a seeded affine map of them."""
    rng = XorShift64Star(seed, "voxel_features")
    extra = c_v - 4
    weight = rng.uniform(-1.0, 1.0, (extra, 4))
    bias = rng.uniform(-1.0, 1.0, (extra,))
    return np.concatenate([base, base @ weight.T + bias], axis=1)


def voxel_corners(grid: VoxelGrid, index) -> np.ndarray:
    """The eight vertices of the cell, shape ``(8, 3)``, LiDAR frame."""
    grid.position(index)
    cfg = grid.config
    lo = np.asarray(cfg.range_min) + np.asarray(index, dtype=np.float64) * cfg.voxel_size
    hi = lo + cfg.voxel_size
    return np.array(
        [[(lo, hi)[bx][0], (lo, hi)[by][1], (lo, hi)[bz][2]] for bx, by, bz in itertools.product((0, 1), repeat=3)]
    )


def all_voxel_corners(grid: VoxelGrid) -> np.ndarray:
    """Corners of every stored voxel, shape ``(N, 8, 3)``, same vertex order as :func:`voxel_corners`."""
    cfg = grid.config
    lo = np.asarray(cfg.range_min) + grid.indices.astype(np.float64) * cfg.voxel_size
    hi = lo + cfg.voxel_size
    bits = np.array(list(itertools.product((0, 1), repeat=3)))
    return np.where(bits[None, :, :] == 1, hi[:, None, :], lo[:, None, :])


def density_parameter(grid: VoxelGrid, index, cap: int = DEFAULT_DENSITY_CAP) -> float:
    count = len(grid.points_of(index))
    return min(count, cap) / cap


def density_parameters(grid: VoxelGrid, cap: int = DEFAULT_DENSITY_CAP) -> np.ndarray:
    return np.minimum(grid.counts, cap) / cap


def voxel_initial_features(grid: VoxelGrid, index, c_v: int) -> np.ndarray:
    if c_v < 4:
        raise ConfigError(f"c_v must be at least 4, got {c_v}")
    members = grid.cloud.points[grid.points_of(index)]
    base = members.mean(axis=0)
    base[:3] -= voxel_centers(np.asarray(index)[None], grid.config)[0]
    return _expand_features(base[None], c_v, grid.feature_seed)[0]
