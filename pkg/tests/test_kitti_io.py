import struct

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from vpfusion.exceptions import MalformedInputError
from vpfusion.kitti_io import (
    Box3D,
    CalibrationSet,
    Image,
    PointCloud,
    load_image,
    parse_calibration,
    parse_labels,
    parse_point_cloud,
    write_calibration,
    write_detections,
    write_point_cloud,
    write_ppm,
)

IDENTITY_CALIB = """\
P2: 1 0 0 0 0 1 0 0 0 0 1 0
R0_rect: 1 0 0 0 1 0 0 0 1
Tr_velo_to_cam: 1 0 0 0 0 1 0 0 0 0 1 0
"""


def test_point_cloud_single_point():
    cloud = parse_point_cloud(struct.pack("<4f", 1.0, 2.0, 3.0, 0.5))
    assert len(cloud) == 1
    np.testing.assert_array_equal(cloud.points, [[1.0, 2.0, 3.0, 0.5]])


def test_point_cloud_empty():
    assert len(parse_point_cloud(b"")) == 0
    assert parse_point_cloud(b"").points.shape == (0, 4)


def test_point_cloud_bad_length_names_offset():
    with pytest.raises(MalformedInputError, match="16"):
        parse_point_cloud(b"\0" * 17)


def test_point_cloud_is_read_only():
    cloud = parse_point_cloud(struct.pack("<4f", 1, 2, 3, 0))
    with pytest.raises(ValueError):
        cloud.points[0, 0] = 5.0


@settings(max_examples=50, deadline=None)
@given(st.lists(st.tuples(*[st.floats(-100, 100, width=32)] * 4), max_size=40))
def test_point_cloud_round_trip_keeps_order(pts):
    raw = struct.pack(f"<{4 * len(pts)}f", *[v for p in pts for v in p])
    cloud = parse_point_cloud(raw)
    np.testing.assert_array_equal(cloud.points, np.array(pts, dtype=np.float64).reshape(-1, 4))
    assert write_point_cloud(cloud) == raw


def test_calibration_identity():
    calib = parse_calibration(IDENTITY_CALIB)
    np.testing.assert_array_equal(calib.p2, np.eye(3, 4))
    np.testing.assert_array_equal(calib.r0_rect, np.eye(3))
    np.testing.assert_array_equal(calib.tr_velo_to_cam, np.eye(3, 4))
    assert calib.is_rectification_orthonormal()


def test_calibration_order_and_unknown_keys():
    lines = IDENTITY_CALIB.splitlines()
    shuffled = "\n".join(["P0: 1 2 3", lines[2], "Tr_imu_to_velo: 0 0 0", lines[0], lines[1]])
    a, b = parse_calibration(IDENTITY_CALIB), parse_calibration(shuffled)
    for name in ("p2", "r0_rect", "tr_velo_to_cam"):
        np.testing.assert_array_equal(getattr(a, name), getattr(b, name))


def test_calibration_wrong_count_names_key():
    text = IDENTITY_CALIB.replace("P2: 1 0 0 0 0 1 0 0 0 0 1 0", "P2: 1 0 0 0 0 1 0 0 0 0 1")
    with pytest.raises(MalformedInputError, match="P2"):
        parse_calibration(text)


def test_calibration_missing_key():
    with pytest.raises(MalformedInputError, match="R0_rect"):
        parse_calibration("\n".join(l for l in IDENTITY_CALIB.splitlines() if not l.startswith("R0")))


def test_calibration_write_round_trip():
    rng = np.random.default_rng(0)
    calib = CalibrationSet(rng.normal(size=(3, 4)), np.eye(3), rng.normal(size=(3, 4)))
    back = parse_calibration(write_calibration(calib))
    np.testing.assert_array_equal(back.p2, calib.p2)
    np.testing.assert_array_equal(back.tr_velo_to_cam, calib.tr_velo_to_cam)


def test_velo_to_image_chain():
    rng = np.random.default_rng(1)
    calib = CalibrationSet(rng.normal(size=(3, 4)), rng.normal(size=(3, 3)), rng.normal(size=(3, 4)))
    r0 = np.eye(4)
    r0[:3, :3] = calib.r0_rect
    tr = np.vstack([calib.tr_velo_to_cam, [0, 0, 0, 1]])
    np.testing.assert_allclose(calib.velo_to_image(), calib.p2 @ r0 @ tr, rtol=1e-14)


def test_labels_pedestrian_line():
    (box,) = parse_labels("Pedestrian 0.0 0 -0.2 100 150 140 250 1.8 0.6 0.9 2.0 1.5 10.0 -0.1")
    assert box.cls == "Pedestrian"
    assert box.dims == (1.8, 0.6, 0.9)
    assert box.location == (2.0, 1.5, 10.0)
    assert box.score is None
    assert box.height_2d == 100


def test_labels_empty_and_scored():
    assert parse_labels("") == []
    (box,) = parse_labels("Car 0 0 0 0 0 10 10 1 1 1 0 0 5 0 0.75\n\n")
    assert box.score == 0.75


def test_labels_dontcare_and_case():
    boxes = parse_labels(
        "DontCare -1 -1 -10 5 5 20 20 -1 -1 -1 -1000 -1000 -1000 -10\n"
        "car 0 0 0 0 0 10 10 1 1 1 0 0 5 0\n"
    )
    assert boxes[0].is_dontcare and boxes[0].cls == "other"
    assert boxes[1].cls == "other"


def test_labels_bad_field_count_names_line():
    with pytest.raises(MalformedInputError, match="line 2"):
        parse_labels("Car 0 0 0 0 0 10 10 1 1 1 0 0 5 0\nCar 0 0\n")


def _det(score=0.5, **kw):
    base = dict(type="Car", truncation=0.0, occlusion=1, alpha=0.1, bbox2d=(1.0, 2.0, 3.0, 4.0),
                dims=(1.5, 1.6, 3.9), location=(1.0, 1.5, 20.0), rotation_y=0.3, score=score)
    base.update(kw)
    return Box3D(**base)


def test_write_detections_shapes():
    assert write_detections([]) == ""
    text = write_detections([_det()])
    assert text.count("\n") == 1
    assert len(text.split()) == 16


def test_write_detections_needs_score():
    with pytest.raises(MalformedInputError):
        write_detections([_det(score=None)])


def test_write_detections_second_round_trip_exact():
    rng = np.random.default_rng(2)
    boxes = [_det(score=float(rng.uniform()), location=tuple(rng.normal(size=3)), rotation_y=float(rng.uniform(-3, 3)))
             for _ in range(20)]
    once = write_detections(parse_labels(write_detections(boxes)))
    assert write_detections(parse_labels(once)) == once


def test_ppm_two_pixels():
    img = load_image(b"P6 2 1 255\n" + bytes([255, 0, 0, 0, 255, 0]))
    assert (img.width, img.height) == (2, 1)
    np.testing.assert_array_equal(img.data[0, 0], [255, 0, 0])
    np.testing.assert_array_equal(img.data[0, 1], [0, 255, 0])


def test_ppm_black_pixel_and_comment():
    img = load_image(b"P6\n# made by hand\n1 1\n255\n\0\0\0")
    assert img.data.shape == (1, 1, 3) and not img.data.any()


@pytest.mark.parametrize("raw", [b"P6 2 1 255\n" + bytes(5), b"P5 1 1 255\n\0", b"P6 2", b"P6 1 1 65535\n" + bytes(6)])
def test_ppm_malformed(raw):
    with pytest.raises(MalformedInputError):
        load_image(raw)


def test_ppm_write_round_trip():
    data = np.random.default_rng(3).integers(0, 256, (5, 7, 3), dtype=np.uint8)
    img = load_image(write_ppm(Image(7, 5, data)))
    np.testing.assert_array_equal(img.data, data)


def test_png_load():
    pytest.importorskip("PIL")
    import io

    from PIL import Image as PILImage

    data = np.random.default_rng(4).integers(0, 256, (4, 6, 3), dtype=np.uint8)
    buf = io.BytesIO()
    PILImage.fromarray(data).save(buf, format="PNG")
    np.testing.assert_array_equal(load_image(buf.getvalue(), "PNG").data, data)


def test_image_shape_checked():
    with pytest.raises(MalformedInputError):
        Image(2, 2, np.zeros(11, dtype=np.uint8))


def test_point_cloud_rejects_non_finite():
    with pytest.raises(MalformedInputError):
        PointCloud(np.array([[np.nan, 0, 0, 0]]))
