"""Readers and writers for the KITTI object-detection file formats."""

from __future__ import annotations

import io
import struct
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .exceptions import MalformedInputError

CLASSES = ("Car", "Pedestrian", "Cyclist")


def _frozen(array):
    array.setflags(write=False)
    return array


@dataclass(frozen=True)
class PointCloud:
    """LiDAR returns as an ``(N, 4)`` float64 array of x, y, z, intensity."""

    points: np.ndarray

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=np.float64).reshape(-1, 4)
        if not np.all(np.isfinite(pts)):
            raise MalformedInputError("point cloud contains non-finite values")
        object.__setattr__(self, "points", _frozen(pts.copy()))

    def __len__(self):
        return self.points.shape[0]

    @property
    def xyz(self):
        return self.points[:, :3]

    @property
    def intensity(self):
        return self.points[:, 3]


@dataclass(frozen=True)
class CalibrationSet:
    p2: np.ndarray
    r0_rect: np.ndarray
    tr_velo_to_cam: np.ndarray

    def __post_init__(self):
        for name, shape in (("p2", (3, 4)), ("r0_rect", (3, 3)), ("tr_velo_to_cam", (3, 4))):
            mat = np.asarray(getattr(self, name), dtype=np.float64)
            if mat.shape != shape:
                raise MalformedInputError(f"{name}: expected shape {shape}, got {mat.shape}")
            if not np.all(np.isfinite(mat)):
                raise MalformedInputError(f"{name}: non-finite entries")
            object.__setattr__(self, name, _frozen(mat.copy()))

    def is_rectification_orthonormal(self, tol=1e-3):
        r = self.r0_rect
        return float(np.max(np.abs(r @ r.T - np.eye(3)))) < tol

    def velo_to_image(self):
        """The composed 3x4 matrix ``P2 · R0 · Tr`` (homogeneous LiDAR -> pixel)."""
        r0 = np.eye(4)
        r0[:3, :3] = self.r0_rect
        tr = np.eye(4)
        tr[:3, :] = self.tr_velo_to_cam
        return self.p2 @ r0 @ tr


@dataclass(frozen=True)
class Image:
    width: int
    height: int
    data: np.ndarray  # (height, width, 3) uint8

    def __post_init__(self):
        data = np.asarray(self.data, dtype=np.uint8)
        if data.size != 3 * self.width * self.height:
            raise MalformedInputError(
                f"image data has {data.size} bytes, expected {3 * self.width * self.height}"
            )
        object.__setattr__(self, "data", _frozen(data.reshape(self.height, self.width, 3).copy()))


@dataclass(frozen=True)
class Box3D:
    """One KITTI label or detection line.

    ``type`` keeps the raw KITTI class string so files round-trip; ``cls``
    folds it onto the evaluated classes (anything else, DontCare included,
    becomes ``"other"``).
    """

    type: str
    truncation: float
    occlusion: int
    alpha: float
    bbox2d: tuple  # u_min, v_min, u_max, v_max
    dims: tuple  # h, w, l
    location: tuple  # x, y, z (camera frame, bottom center)
    rotation_y: float
    score: Optional[float] = None

    @property
    def cls(self):
        return self.type if self.type in CLASSES else "other"

    @property
    def is_dontcare(self):
        return self.type == "DontCare"

    @property
    def height_2d(self):
        return self.bbox2d[3] - self.bbox2d[1]

    def box7(self):
        """``(x, y, z, h, w, l, ry)`` as consumed by the 3D IoU."""
        return (*self.location, *self.dims, self.rotation_y)


# Aliases matching the evaluator vocabulary.
GroundTruthBox = Box3D
DetectionBox = Box3D


def parse_point_cloud(raw: bytes) -> PointCloud:
    """Decode a headerless velodyne scan of little-endian float32 quadruples."""
    if len(raw) % 16:
        tail = len(raw) - len(raw) % 16
        raise MalformedInputError(
            f"velodyne payload of {len(raw)} bytes is not a multiple of 16; "
            f"trailing record starts at byte offset {tail}"
        )
    pts = np.frombuffer(raw, dtype="<f4").reshape(-1, 4).astype(np.float64)
    return PointCloud(pts)


def write_point_cloud(cloud: PointCloud) -> bytes:
    return np.ascontiguousarray(cloud.points, dtype="<f4").tobytes()


_CALIB_KEYS = {"P2": (3, 4), "R0_rect": (3, 3), "Tr_velo_to_cam": (3, 4)}


def parse_calibration(text: str) -> CalibrationSet:
    found = {}
    for line in text.splitlines():
        key, sep, rest = line.partition(":")
        key = key.strip()
        if not sep or key not in _CALIB_KEYS:
            continue
        shape = _CALIB_KEYS[key]
        try:
            values = [float(tok) for tok in rest.split()]
        except ValueError as exc:
            raise MalformedInputError(f"{key}: {exc}") from None
        if len(values) != shape[0] * shape[1]:
            raise MalformedInputError(
                f"{key}: expected {shape[0] * shape[1]} values, got {len(values)}"
            )
        found[key] = np.array(values).reshape(shape)
    for key in _CALIB_KEYS:
        if key not in found:
            raise MalformedInputError(f"{key}: missing from calibration")
    return CalibrationSet(found["P2"], found["R0_rect"], found["Tr_velo_to_cam"])


def write_calibration(calib: CalibrationSet) -> str:
    def row(mat):
        return " ".join(repr(float(v)) for v in mat.ravel())

    return (
        f"P2: {row(calib.p2)}\n"
        f"R0_rect: {row(calib.r0_rect)}\n"
        f"Tr_velo_to_cam: {row(calib.tr_velo_to_cam)}\n"
    )


def parse_labels(text: str) -> list[Box3D]:
    boxes = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        fields = line.split()
        if not fields:
            continue
        if len(fields) not in (15, 16):
            raise MalformedInputError(f"line {lineno}: expected 15 or 16 fields, got {len(fields)}")
        try:
            v = [float(f) for f in fields[1:]]
        except ValueError as exc:
            raise MalformedInputError(f"line {lineno}: {exc}") from None
        boxes.append(
            Box3D(
                type=fields[0],
                truncation=v[0],
                occlusion=int(v[1]),
                alpha=v[2],
                bbox2d=tuple(v[3:7]),
                dims=tuple(v[7:10]),
                location=tuple(v[10:13]),
                rotation_y=v[13],
                score=v[14] if len(v) == 15 else None,
            )
        )
    return boxes


def write_detections(boxes: Sequence[Box3D]) -> str:
    """KITTI 16-column text, numbers rounded to two decimals."""
    out = io.StringIO()
    for b in boxes:
        if b.score is None:
            raise MalformedInputError(f"{b.type} detection has no score")
        nums = [b.truncation, b.occlusion, b.alpha, *b.bbox2d, *b.dims, *b.location, b.rotation_y, b.score]
        out.write(b.type)
        out.write(" %.2f %d" % (nums[0], nums[1]))
        out.write("".join(" %.2f" % x for x in nums[2:]))
        out.write("\n")
    return out.getvalue()


def load_image(raw: bytes, format: str = "PPM") -> Image:
    fmt = format.upper()
    if fmt == "PPM":
        return _load_ppm(raw)
    if fmt == "PNG":
        return _load_png(raw)
    raise MalformedInputError(f"unsupported image format {format!r}")


def _load_ppm(raw: bytes) -> Image:
    tokens = []
    pos = 0
    # header: magic, width, height, maxval, then exactly one whitespace byte
    while len(tokens) < 4:
        while pos < len(raw) and raw[pos : pos + 1].isspace():
            pos += 1
        if pos < len(raw) and raw[pos : pos + 1] == b"#":
            while pos < len(raw) and raw[pos : pos + 1] not in (b"\n", b"\r"):
                pos += 1
            continue
        start = pos
        while pos < len(raw) and not raw[pos : pos + 1].isspace() and raw[pos : pos + 1] != b"#":
            pos += 1
        if start == pos:
            raise MalformedInputError("PPM header truncated")
        tokens.append(raw[start:pos])
    if tokens[0] != b"P6":
        raise MalformedInputError(f"not a binary PPM (magic {tokens[0]!r})")
    try:
        width, height, maxval = (int(t) for t in tokens[1:])
    except ValueError:
        raise MalformedInputError("PPM header has non-integer fields") from None
    if width <= 0 or height <= 0 or maxval != 255:
        raise MalformedInputError(f"unsupported PPM geometry {width}x{height} maxval {maxval}")
    if pos >= len(raw) or not raw[pos : pos + 1].isspace():
        raise MalformedInputError("PPM header not terminated")
    pos += 1
    need = 3 * width * height
    payload = raw[pos : pos + need]
    if len(payload) < need:
        raise MalformedInputError(f"PPM pixel data truncated: {len(payload)} of {need} bytes")
    return Image(width, height, np.frombuffer(payload, dtype=np.uint8))


def _load_png(raw: bytes) -> Image:
    try:
        from PIL import Image as PILImage
    except ImportError:  # pragma: no cover
        raise MalformedInputError("PNG decoding needs Pillow (pip install artifact[png])") from None
    try:
        with PILImage.open(io.BytesIO(raw)) as im:
            rgb = np.asarray(im.convert("RGB"))
    except Exception as exc:
        raise MalformedInputError(f"PNG decode failed: {exc}") from None
    return Image(rgb.shape[1], rgb.shape[0], rgb)


def write_ppm(image: Image) -> bytes:
    return b"P6\n%d %d\n255\n" % (image.width, image.height) + image.data.tobytes()


def pack_points(points) -> bytes:
    """Encode an iterable of (x, y, z, intensity) tuples as velodyne bytes."""
    return b"".join(struct.pack("<4f", *p) for p in points)
