"""Random synthetic scenes shared by the test modules."""

import numpy as np

from vpfusion.kitti_io import CalibrationSet, Image, PointCloud
from vpfusion.pipeline import Frame

VELO_TO_CAM_AXES = np.array([[0.0, -1, 0], [0, 0, -1], [1, 0, 0]])


def rotation(rng, scale):
    """Small random rotation via Rodrigues' formula."""
    w = rng.normal(0, scale, 3)
    theta = np.linalg.norm(w)
    if theta == 0:
        return np.eye(3)
    k = w / theta
    K = np.array([[0, -k[2], k[1]], [k[2], 0, -k[0]], [-k[1], k[0], 0]])
    return np.eye(3) + np.sin(theta) * K + (1 - np.cos(theta)) * K @ K


def random_calib(rng, width=128, height=96):
    f = rng.uniform(0.8, 1.2) * width
    p2 = np.array(
        [[f, 0, width / 2 + rng.normal(0, 3), rng.normal(0, 20)], [0, f, height / 2 + rng.normal(0, 3), 0], [0, 0, 1, 0]]
    )
    r0 = rotation(rng, 0.01)
    tr = np.hstack([VELO_TO_CAM_AXES @ rotation(rng, 0.02), rng.normal(0, 0.1, (3, 1))])
    return CalibrationSet(p2, r0, tr)


def random_cloud(rng, n_points, clusters=8):
    """Half uniform clutter, half tight clusters so densities vary."""
    n_u = n_points // 2
    uniform = np.column_stack(
        [rng.uniform(-5, 60, n_u), rng.uniform(-25, 25, n_u), rng.uniform(-3.5, 1.5, n_u)]
    )
    centers = np.column_stack(
        [rng.uniform(3, 40, clusters), rng.uniform(-8, 8, clusters), rng.uniform(-2.5, 0.5, clusters)]
    )
    which = rng.integers(0, clusters, n_points - n_u)
    clustered = centers[which] + rng.normal(0, 0.15, (len(which), 3))
    xyz = np.vstack([uniform, clustered])
    return PointCloud(np.column_stack([xyz, rng.uniform(0, 1, len(xyz))]))


def random_image(rng, width=128, height=96):
    data = rng.integers(0, 256, (height, width, 3), dtype=np.uint8)
    # a few flat patches so zero-contrast ROIs also occur
    for _ in range(3):
        r, c = rng.integers(0, height), rng.integers(0, width)
        data[r : r + 20, c : c + 30] = rng.integers(0, 256, 3, dtype=np.uint8)
    return Image(width, height, data)


def random_frame(rng, n_points=300, width=128, height=96):
    return Frame(
        random_cloud(rng, n_points),
        random_calib(rng, width, height),
        random_image(rng, width, height),
        [],
        {},
    )


def random_box7(rng):
    return (
        rng.uniform(-5, 5),
        rng.uniform(0, 2),
        rng.uniform(5, 15),
        rng.uniform(0.5, 3),
        rng.uniform(0.5, 3),
        rng.uniform(0.5, 5),
        rng.uniform(-np.pi, np.pi),
    )
