"""Oracle checks runnable from the command line, independent of pytest."""

from __future__ import annotations

import math

import numpy as np

from . import oracles
from .evaluator import average_precision_r40, mean_average_precision, oriented_iou_3d
from .gradcheck import TOLERANCE, check_fusion_gradients, corrupted_control
from .image_ops import FeatureMap, roi_align_1x1
from .kitti_io import CalibrationSet
from .projector import occlusion_counts, project_point

REFERENCE_ROWS = {
    "fusion": ((88.51, 80.97, 76.74, 54.65, 48.36, 44.98, 77.64, 64.10, 58.00), 65.99),
    "hotspot": ((87.60, 78.31, 73.34, 53.10, 45.37, 41.47, 82.59, 65.95, 59.00), 65.19),
    "single-stage": ((88.36, 79.57, 74.55, 54.64, 44.27, 40.23, 82.48, 64.10, 56.90), 65.01),
}


def _check_map():
    worst = max(abs(mean_average_precision(v) - m) for v, m in REFERENCE_ROWS.values())
    return worst <= 0.005, f"max |mAP - reference| = {worst:.4f}"


def _check_gradients():
    report = check_fusion_gradients(8, 16, seed=0)
    control = corrupted_control(8, 16, seed=0)
    ok = report.max_rel_error < TOLERANCE and control > 1e-2
    return ok, f"max rel error {report.max_rel_error:.3e}, corrupted control {control:.3e}"


def _check_occlusion():
    rng = np.random.default_rng(0)
    lo = rng.uniform(0, 50, (200, 2))
    size = rng.uniform(0, 30, (200, 2))
    rois = np.column_stack([lo, lo + size, rng.uniform(1, 60, 200)])
    fast = occlusion_counts(rois).tolist()
    slow = oracles.occlusion_counts_bruteforce(rois)
    return fast == slow, f"{sum(slow)} containments over 200 ROIs"


def _check_ap():
    rng = np.random.default_rng(1)
    worst = 0.0
    for _ in range(50):
        n = int(rng.integers(0, 30))
        flags = rng.choice([-1, 0, 1], size=n, p=[0.1, 0.4, 0.5])
        scores = np.round(rng.uniform(0, 1, n), 2)
        n_gt = int(max(1, (flags == 1).sum() + rng.integers(0, 5)))
        worst = max(worst, abs(average_precision_r40(flags, n_gt, scores) - oracles.ap_r40_bruteforce(flags, scores, n_gt)))
    return worst <= 1e-12, f"max |fast - definition| = {worst:.1e}"


def _check_geometry():
    a = (0.0, 0.0, 0.0, 1.0, 1.0, 1.0, 0.0)
    b = (0.5, 0.0, 0.0, 1.0, 1.0, 1.0, 0.0)
    iou = oriented_iou_3d(a, b)
    calib = CalibrationSet(np.eye(3, 4), np.eye(3), np.eye(3, 4))
    u, v, d = project_point(calib, (0.5, -0.25, 2.0))
    ok = abs(iou - 1 / 3) <= 1e-12 and abs(u - 0.25) <= 1e-12 and abs(v + 0.125) <= 1e-12 and d == 2.0
    return ok, f"half-overlap IoU {iou:.15f}, projection ({u}, {v}, {d})"


def _check_roi_align():
    fmap = FeatureMap(np.array([[[0.0], [0.0]], [[1.0], [1.0]]]), stride=1)
    got = float(roi_align_1x1(fmap, (0.0, 0.0, 2.0, 2.0))[0])
    return math.isclose(got, 0.5, abs_tol=1e-15), f"2x2 ramp -> {got}"


CHECKS = (
    ("map-arithmetic", _check_map),
    ("gradient-exactness", _check_gradients),
    ("occlusion-oracle", _check_occlusion),
    ("ap-r40-oracle", _check_ap),
    ("geometry", _check_geometry),
    ("roi-align", _check_roi_align),
)


def run_all():
    """Yield ``(name, passed, detail)`` for every check, in a fixed order."""
    for name, fn in CHECKS:
        try:
            ok, detail = fn()
        except Exception as exc:  # report, don't abort the suite
            ok, detail = False, f"{type(exc).__name__}: {exc}"
        yield name, bool(ok), detail
