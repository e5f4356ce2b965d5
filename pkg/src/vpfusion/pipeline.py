"""End-to-end wiring: load one KITTI frame, pair voxels with pixels, fuse."""

from __future__ import annotations

import os
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

import numpy as np

from .config import RunConfig
from .exceptions import ShapeError
from .image_ops import FeatureMap, GrayImage, surrogate_camera_backbone, to_grayscale
from .kitti_io import (
    CalibrationSet,
    Image,
    PointCloud,
    load_image,
    parse_calibration,
    parse_labels,
    parse_point_cloud,
)
from .projector import PairingConfig, build_pairs
from .vpf_layer import VPFConfig, fuse_feature_maps, init_weights, load_weights
from .voxel_grid import VoxelGrid, voxelize


def bundled_sample_dir() -> Path:
    return Path(str(resources.files("vpfusion") / "data" / "sample"))


@dataclass
class Frame:
    cloud: PointCloud
    calib: CalibrationSet
    image: Image
    labels: list
    paths: dict


def frame_paths(config: RunConfig) -> dict:
    root = Path(config.sample) if config.sample else bundled_sample_dir()
    f = config.frame
    image = config.image
    if image is None:
        image = root / "image_2" / f"{f}.ppm"
        if not image.exists() and (root / "image_2" / f"{f}.png").exists():
            image = root / "image_2" / f"{f}.png"
    return {
        "velodyne": Path(config.velodyne or root / "velodyne" / f"{f}.bin"),
        "calib": Path(config.calib or root / "calib" / f"{f}.txt"),
        "image": Path(image),
        "labels": Path(config.labels or root / "label_2" / f"{f}.txt"),
    }


def load_frame(config: RunConfig) -> Frame:
    paths = frame_paths(config)
    cloud = parse_point_cloud(paths["velodyne"].read_bytes())
    calib = parse_calibration(paths["calib"].read_text(encoding="utf-8"))
    fmt = "PNG" if paths["image"].suffix.lower() == ".png" else "PPM"
    image = load_image(paths["image"].read_bytes(), fmt)
    labels = parse_labels(paths["labels"].read_text(encoding="utf-8")) if paths["labels"].exists() else []
    return Frame(cloud, calib, image, labels, {k: str(v) for k, v in paths.items()})


def pairing_config(config: RunConfig) -> PairingConfig:
    return PairingConfig(
        density_cap=config.density_cap,
        occlusion_ignore_depth=config.occlusion_ignore_depth,
        align_samples=config.align_samples,
    )


@dataclass
class PairingResult:
    grid: VoxelGrid
    camera_map: FeatureMap
    gray: GrayImage
    pairs: list


def run_pairing(frame: Frame, config: RunConfig) -> PairingResult:
    grid = voxelize(frame.cloud, config.grid, c_v=config.c_v, seed=config.feature_seed)
    camera_map = surrogate_camera_backbone(frame.image, config.stride, config.c_p, config.backbone_seed)
    gray = to_grayscale(frame.image)
    pairs = build_pairs(grid, frame.calib, camera_map, gray, pairing_config(config))
    return PairingResult(grid, camera_map, gray, pairs)


def fusion_weights(config: RunConfig):
    if config.weights:
        weights = load_weights(Path(config.weights).read_bytes())
        if (weights.c_v, weights.c_p) != (config.c_v, config.c_p):
            raise ShapeError(
                f"weight file is for c_v={weights.c_v}, c_p={weights.c_p}; config has {config.c_v}, {config.c_p}"
            )
        return weights
    return init_weights(VPFConfig(c_v=config.c_v, c_p=config.c_p, seed=config.seed))


@dataclass
class FusionStats:
    pairs: int
    voxels: int
    voxels_changed: int
    cells: int
    cells_changed: int
    voxel_residual_norm: float
    camera_residual_norm: float
    voxel_residual_max: float
    camera_residual_max: float


def run_fusion(result: PairingResult, config: RunConfig, weights=None):
    weights = weights if weights is not None else fusion_weights(config)
    lidar = result.grid.feature_dict()
    fused_lidar, fused_cam = fuse_feature_maps(
        lidar, result.camera_map, result.pairs, weights, config.scatter, config.align_samples
    )
    before = np.stack(list(lidar.values())) if lidar else np.zeros((0, config.c_v))
    after = np.stack([fused_lidar[k] for k in lidar]) if lidar else before
    dv = after - before
    dc = fused_cam.data - result.camera_map.data
    stats = FusionStats(
        pairs=len(result.pairs),
        voxels=len(lidar),
        voxels_changed=int(np.count_nonzero(np.any(after != before, axis=1))),
        cells=result.camera_map.height * result.camera_map.width,
        cells_changed=int(np.count_nonzero(np.any(fused_cam.data != result.camera_map.data, axis=2))),
        voxel_residual_norm=float(np.linalg.norm(dv)),
        camera_residual_norm=float(np.linalg.norm(dc)),
        voxel_residual_max=float(np.abs(dv).max(initial=0.0)),
        camera_residual_max=float(np.abs(dc).max(initial=0.0)),
    )
    return fused_lidar, fused_cam, stats


def label_files(directory) -> list[str]:
    return sorted(name for name in os.listdir(directory) if name.endswith(".txt"))
