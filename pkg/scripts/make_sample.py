"""Regenerate the bundled synthetic KITTI-format sample (frame 000000).

Three occupied voxels on the default grid. Two of them sit on one camera
ray, so the nearer ROI contains the farther one. Run from the repo root.
"""

from pathlib import Path

import numpy as np

from vpfusion.kitti_io import CalibrationSet, Image, pack_points, write_calibration, write_ppm

OUT = Path(__file__).resolve().parents[1] / "src" / "vpfusion" / "data" / "sample"

# voxel centers on the default grid (cell 0.2 x 0.2 x 0.4) and point counts
VOXELS = [
    ((5.1, 0.1, 0.0), 40),  # near, on the shared ray
    ((15.3, 0.3, 0.0), 12),  # far, behind the first
    ((10.1, -2.1, -0.4), 5),
]
HALF = np.array([0.1, 0.1, 0.2])

P2 = np.array([[120.0, 0, 64, 0], [0, 120, 48, 0], [0, 0, 1, 0]])
TR = np.array([[0.0, -1, 0, 0], [0, 0, -1, 0], [1, 0, 0, 0]])

LABELS = """\
Car 0.00 0 -1.57 10.00 44.00 60.00 90.00 1.50 1.60 3.90 -2.00 1.60 8.00 -1.57
Pedestrian 0.00 0 0.00 80.00 30.00 95.00 80.00 1.75 0.60 0.80 1.50 1.70 6.00 0.00
Cyclist 0.00 0 1.20 100.00 35.00 124.00 85.00 1.70 0.60 1.80 3.00 1.65 7.00 1.20
"""


def main():
    rng = np.random.default_rng(2024)
    pts = []
    for center, n in VOXELS:
        xyz = np.asarray(center) + rng.uniform(-0.8, 0.8, (n, 3)) * HALF
        inten = rng.uniform(0.0, 1.0, (n, 1))
        pts.append(np.hstack([xyz, inten]))
    pts = np.vstack(pts)

    h, w = 96, 128
    yy, xx = np.mgrid[0:h, 0:w]
    rgb = np.stack([(2 * xx) % 256, (3 * yy) % 256, (xx * yy) % 256], axis=-1).astype(np.uint8)

    for sub in ("velodyne", "calib", "image_2", "label_2"):
        (OUT / sub).mkdir(parents=True, exist_ok=True)
    (OUT / "velodyne" / "000000.bin").write_bytes(pack_points(pts))
    calib = CalibrationSet(P2, np.eye(3), TR)
    (OUT / "calib" / "000000.txt").write_text(write_calibration(calib))
    (OUT / "image_2" / "000000.ppm").write_bytes(write_ppm(Image(w, h, rgb)))
    (OUT / "label_2" / "000000.txt").write_text(LABELS)


if __name__ == "__main__":
    main()
