"""Voxel-pixel fusion of LiDAR and camera features, with KITTI I/O and evaluation."""

__version__ = "0.1.0"
