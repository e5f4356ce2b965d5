"""scikit-learn style wrappers around the pairing, fusion and evaluation steps.

The wrappers hold hyper-parameters only; learned state lives in trailing
underscore attributes set by ``fit``. They compose with ``get_params`` /
``set_params`` / ``clone`` but are not meant for 2-D array pipelines.
"""

from __future__ import annotations

from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from . import pipeline
from ._validation import as_list, check_choice, check_int, check_unit_interval
from .evaluator import evaluate, mean_average_precision
from .image_ops import surrogate_camera_backbone, to_grayscale
from .projector import PairingConfig, build_pairs
from .vpf_layer import SCATTER_MODES, VPFConfig, fuse_feature_maps, init_weights
from .voxel_grid import GridConfig, voxelize


class VoxelPixelPairing(TransformerMixin, BaseEstimator):
    """Frame -> :class:`pipeline.PairingResult` (voxels, camera map, pairs)."""

    def __init__(self, grid=None, c_v=64, c_p=64, stride=4, density_cap=35,
                 occlusion_ignore_depth=False, align_samples=4, feature_seed=0, backbone_seed=0):
        self.grid = grid
        self.c_v = c_v
        self.c_p = c_p
        self.stride = stride
        self.density_cap = density_cap
        self.occlusion_ignore_depth = occlusion_ignore_depth
        self.align_samples = align_samples
        self.feature_seed = feature_seed
        self.backbone_seed = backbone_seed

    def fit(self, X=None, y=None):
        check_int("c_v", self.c_v, 4)
        check_int("c_p", self.c_p, 1)
        check_choice("stride", self.stride, (1, 2, 4, 8))
        check_int("density_cap", self.density_cap, 1)
        check_choice("align_samples", self.align_samples, (1, 4))
        self.grid_ = self.grid if self.grid is not None else GridConfig()
        self.pairing_config_ = PairingConfig(self.density_cap, bool(self.occlusion_ignore_depth), self.align_samples)
        return self

    def transform(self, X):
        check_is_fitted(self, "pairing_config_")
        frames, single = as_list(X, pipeline.Frame)
        out = []
        for f in frames:
            grid = voxelize(f.cloud, self.grid_, c_v=self.c_v, seed=self.feature_seed)
            cam = surrogate_camera_backbone(f.image, self.stride, self.c_p, self.backbone_seed)
            gray = to_grayscale(f.image)
            out.append(pipeline.PairingResult(grid, cam, gray, build_pairs(grid, f.calib, cam, gray, self.pairing_config_)))
        return out[0] if single else out


class VoxelPixelFusion(TransformerMixin, BaseEstimator):
    """PairingResult -> ``(fused voxel features, fused camera map)``.

    ``fit`` draws the seeded initial weights; assign ``weights_`` directly
    to use a loaded weight file instead.
    """

    def __init__(self, c_v=64, c_p=64, seed=0, m_depth=2, net_depth=1, scatter="bilinear", align_samples=4):
        self.c_v = c_v
        self.c_p = c_p
        self.seed = seed
        self.m_depth = m_depth
        self.net_depth = net_depth
        self.scatter = scatter
        self.align_samples = align_samples

    def fit(self, X=None, y=None):
        check_choice("scatter", self.scatter, SCATTER_MODES)
        check_choice("align_samples", self.align_samples, (1, 4))
        cfg = VPFConfig(c_v=check_int("c_v", self.c_v), c_p=check_int("c_p", self.c_p), seed=self.seed,
                        m_depth=check_int("m_depth", self.m_depth), net_depth=check_int("net_depth", self.net_depth))
        self.weights_ = init_weights(cfg)
        return self

    def transform(self, X):
        check_is_fitted(self, "weights_")
        results, single = as_list(X, pipeline.PairingResult)
        out = [
            fuse_feature_maps(r.grid.feature_dict(), r.camera_map, r.pairs, self.weights_, self.scatter, self.align_samples)
            for r in results
        ]
        return out[0] if single else out


class Kitti3DEvaluator(BaseEstimator):
    """AP@R40 over (detections, ground truth) frame pairs; ``score`` is mAP."""

    def __init__(self, iou_car=0.7, iou_pedestrian=0.5, iou_cyclist=0.5):
        self.iou_car = iou_car
        self.iou_pedestrian = iou_pedestrian
        self.iou_cyclist = iou_cyclist

    def fit(self, X=None, y=None):
        self.iou_thresholds_ = {
            "Car": check_unit_interval("iou_car", self.iou_car),
            "Pedestrian": check_unit_interval("iou_pedestrian", self.iou_pedestrian),
            "Cyclist": check_unit_interval("iou_cyclist", self.iou_cyclist),
        }
        return self

    def evaluate(self, frames):
        check_is_fitted(self, "iou_thresholds_")
        return evaluate(frames, self.iou_thresholds_)

    def score(self, frames, y=None):
        return mean_average_precision(self.evaluate(frames))
