import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from helpers import random_box7
from vpfusion import oracles
from vpfusion.evaluator import (
    FP,
    IGNORED,
    TP,
    ApTable,
    average_precision_r40,
    bev_corners,
    bev_intersection,
    evaluate,
    is_eligible,
    match_detections,
    mean_average_precision,
    oriented_iou_3d,
    polygon_area,
)
from vpfusion.exceptions import IncompleteTableError, InvalidBoxError, UndefinedAPError
from vpfusion.kitti_io import Box3D

CUBE = (0.0, 0.0, 0.0, 1.0, 1.0, 1.0, 0.0)


def test_iou_examples():
    assert oriented_iou_3d(CUBE, CUBE) == pytest.approx(1.0, abs=1e-15)
    assert oriented_iou_3d(CUBE, (5, 0, 0, 1, 1, 1, 0)) == 0.0
    assert oriented_iou_3d(CUBE, (0, -1.0, 0, 1, 1, 1, 0)) == 0.0  # stacked, touching faces
    assert abs(oriented_iou_3d(CUBE, (0.5, 0, 0, 1, 1, 1, 0)) - 1 / 3) <= 1e-12


def test_iou_rejects_bad_dims():
    with pytest.raises(InvalidBoxError):
        oriented_iou_3d(CUBE, (0, 0, 0, 1, 0, 1, 0))


def test_iou_axis_aligned_matches_interval_oracle():
    rng = np.random.default_rng(0)
    for _ in range(200):
        a = (*rng.uniform(-1, 1, 3), *rng.uniform(0.5, 2, 3), 0.0)
        b = (*rng.uniform(-1, 1, 3), *rng.uniform(0.5, 2, 3), 0.0)
        assert oriented_iou_3d(a, b) == pytest.approx(oracles.box_volume_overlap_axis_aligned(a, b), abs=1e-12)


def test_iou_quarter_turn_of_square_is_same_box():
    a = (1.0, 1.0, 2.0, 1.5, 2.0, 2.0, 0.3)
    b = a[:6] + (0.3 + np.pi / 2,)
    assert oriented_iou_3d(a, b) == pytest.approx(1.0, abs=1e-12)


def test_intersection_bounded_by_smaller_area():
    rng = np.random.default_rng(1)
    for _ in range(300):
        a, b = random_box7(rng), random_box7(rng)
        b = (a[0] + rng.normal(0, 1), b[1], a[2] + rng.normal(0, 1), *b[3:])
        inter = bev_intersection(a, b)
        assert -1e-12 <= inter <= min(a[4] * a[5], b[4] * b[5]) + 1e-12
        assert polygon_area(bev_corners(a)) == pytest.approx(a[4] * a[5])


def gt(cls="Car", height=50.0, occ=0, trunc=0.0, box7=CUBE, bbox=None):
    x, y, z, h, w, l, ry = box7
    bbox = bbox or (0.0, 0.0, 50.0, height)
    return Box3D(cls, trunc, occ, 0.0, bbox, (h, w, l), (x, y, z), ry)


def det(box7=CUBE, score=0.9, cls="Car", bbox=(0.0, 0.0, 50.0, 50.0)):
    x, y, z, h, w, l, ry = box7
    return Box3D(cls, 0.0, 0, 0.0, bbox, (h, w, l), (x, y, z), ry, score)


def test_match_examples():
    res = match_detections([det()], [gt()], 0.7, "Easy", "Car")
    assert res.flags.tolist() == [TP] and res.fn == 0
    res = match_detections([], [gt(), gt(box7=(3, 0, 0, 1, 1, 1, 0))], 0.7, "Easy", "Car")
    assert res.flags.tolist() == [] and res.fn == 2 and res.n_gt == 2


def test_match_other_class_ignored_entirely():
    res = match_detections([det(cls="Pedestrian")], [gt()], 0.5, "Easy", "Car")
    assert len(res.flags) == 0 and res.fn == 1


@pytest.mark.parametrize(
    "kw, easy, moderate, hard",
    [
        (dict(height=40), True, True, True),
        (dict(height=39.9), False, True, True),
        (dict(height=24), False, False, False),
        (dict(occ=1), False, True, True),
        (dict(occ=2), False, False, True),
        (dict(trunc=0.2), False, True, True),
        (dict(trunc=0.4), False, False, True),
        (dict(trunc=0.6), False, False, False),
    ],
)
def test_difficulty_rules(kw, easy, moderate, hard):
    g = gt(**kw)
    assert (is_eligible(g, "Easy"), is_eligible(g, "Moderate"), is_eligible(g, "Hard")) == (easy, moderate, hard)


def test_excluded_gt_and_dontcare_ignore_detections():
    hard_only = gt(occ=2)
    dontcare = Box3D("DontCare", -1, -1, -10, (100, 100, 200, 200), (-1, -1, -1), (-1000, -1000, -1000), -10)
    far = (10, 0, 10, 1, 1, 1, 0)
    dets = [det(), det(box7=far, bbox=(110, 110, 150, 150)), det(box7=far, bbox=(0, 0, 90, 90))]
    res = match_detections(dets, [hard_only, dontcare], 0.7, "Easy", "Car")
    assert res.flags.tolist() == [IGNORED, IGNORED, FP]
    assert res.n_gt == 0
    res = match_detections(dets, [hard_only, dontcare], 0.7, "Hard", "Car")
    assert res.flags.tolist() == [TP, IGNORED, FP]


def test_match_prefers_highest_iou_then_first():
    a = gt(box7=CUBE)
    b = gt(box7=(0.3, 0, 0, 1, 1, 1, 0))
    res = match_detections([det(box7=(0.25, 0, 0, 1, 1, 1, 0)), det(score=0.5)], [a, b], 0.3, "Easy", "Car")
    assert res.flags.tolist() == [TP, TP] and res.fn == 0
    twins = [gt(), gt()]
    res = match_detections([det()], twins, 0.5, "Easy", "Car")
    assert res.flags.tolist() == [TP] and res.fn == 1


def test_match_agrees_with_bruteforce_greedy():
    rng = np.random.default_rng(2)
    for _ in range(100):
        gts = [gt(box7=random_box7(rng)) for _ in range(5)]
        dets = []
        for _ in range(10):
            base = gts[int(rng.integers(0, 5))].box7() if rng.random() < 0.7 else random_box7(rng)
            box = tuple(np.add(base, rng.normal(0, 0.2, 7) * (1, 0, 1, 0, 0, 0, 1)))
            dets.append(det(box7=box, score=float(rng.integers(0, 5)) / 4))
        res = match_detections(dets, gts, 0.5, "Easy", "Car")
        flags, fn = oracles.greedy_match_bruteforce(
            [d.box7() for d in dets], [d.score for d in dets], [g.box7() for g in gts], oriented_iou_3d, 0.5
        )
        assert res.flags.tolist() == flags and res.fn == fn


def test_ap_examples():
    assert average_precision_r40([1, 1, 1, 1], 4) == 100.0
    assert average_precision_r40([1, 1, 0, 0], 2) == 100.0
    assert average_precision_r40([0, 0, 0], 3) == 0.0
    assert average_precision_r40([], 3) == 0.0
    with pytest.raises(UndefinedAPError):
        average_precision_r40([1], 0)


def test_ap_six_dets_four_gt():
    flags, scores = [1, 0, 1, 1, 0, 1], [0.9, 0.8, 0.7, 0.6, 0.5, 0.4]
    # recall/precision: .25/1, .25/.5, .5/.67, .75/.75, .75/.6, 1/.67
    expected = 100 * (10 * 1 + 10 * 0.75 + 10 * 0.75 + 10 * 4 / 6) / 40
    assert average_precision_r40(flags, 4, scores) == pytest.approx(expected, abs=1e-12)
    assert average_precision_r40(flags, 4, scores) == pytest.approx(oracles.ap_r40_bruteforce(flags, scores, 4), abs=1e-12)


def test_ap_tied_scores_form_one_threshold():
    # tie at 0.5 between a FP and a TP; both enter together
    assert average_precision_r40([0, 1], 1, [0.5, 0.5]) == 50.0
    assert average_precision_r40([0, 1], 1) == 50.0
    assert average_precision_r40([1, -1, 0], 1, [0.9, 0.8, 0.1]) == 100.0


flag_lists = st.lists(st.sampled_from([0, 1]), max_size=30)


@settings(max_examples=200, deadline=None)
@given(flag_lists, st.integers(0, 5))
def test_ap_monotone_under_appends(flags, extra_gt):
    n_gt = sum(flags) + 1 + extra_gt
    base = average_precision_r40(flags, n_gt)
    assert 0.0 <= base <= 100.0
    assert average_precision_r40([1] + flags, n_gt) >= base - 1e-12
    assert average_precision_r40(flags + [0], n_gt) <= base + 1e-12


NINE_APS = (88.51, 80.97, 76.74, 54.65, 48.36, 44.98, 77.64, 64.10, 58.00)


def test_map_examples():
    assert round(mean_average_precision(NINE_APS), 2) == 65.99
    assert round(mean_average_precision((87.60, 78.31, 73.34, 53.10, 45.37, 41.47, 82.59, 65.95, 59.00)), 2) == 65.19
    assert mean_average_precision([42.5] * 9) == 42.5
    table = ApTable.from_rows({"Car": NINE_APS[:3], "Pedestrian": NINE_APS[3:6], "Cyclist": NINE_APS[6:]})
    assert mean_average_precision(table) == mean_average_precision(NINE_APS)


def test_map_incomplete():
    with pytest.raises(IncompleteTableError):
        mean_average_precision(NINE_APS[:8])
    table = ApTable.from_rows({"Car": NINE_APS[:3], "Pedestrian": NINE_APS[3:6]})
    with pytest.raises(IncompleteTableError):
        mean_average_precision(table)


def test_evaluate_self_match_is_perfect():
    frames = []
    rng = np.random.default_rng(3)
    for _ in range(3):
        gts = [gt(cls=c, box7=(rng.uniform(-10, 10), 1.5, rng.uniform(5, 40), 1.5, 1.6, 3.9, 0.0))
               for c in ("Car", "Pedestrian", "Cyclist")]
        frames.append((gts, gts))
    table = evaluate(frames)
    assert table.values() == [100.0] * 9
    assert mean_average_precision(table) == 100.0


def test_evaluate_missing_class_cell_is_none():
    table = evaluate([([det()], [gt()])])
    assert table[("Car", "Easy")] == 100.0 and table[("Pedestrian", "Easy")] is None
    with pytest.raises(IncompleteTableError):
        mean_average_precision(table)
