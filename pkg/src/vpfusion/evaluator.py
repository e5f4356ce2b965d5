"""KITTI-style 3D detection evaluation: oriented IoU, matching, AP@R40, mAP."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .exceptions import IncompleteTableError, InvalidBoxError, UndefinedAPError
from .kitti_io import CLASSES, Box3D

DIFFICULTIES = ("Easy", "Moderate", "Hard")
N_RECALL = 40

# min 2D box height (px), max occlusion level, max truncation
DIFFICULTY_RULES = {
    "Easy": (40.0, 0, 0.15),
    "Moderate": (25.0, 1, 0.30),
    "Hard": (25.0, 2, 0.50),
}
DEFAULT_IOU_THRESHOLDS = {"Car": 0.7, "Pedestrian": 0.5, "Cyclist": 0.5}
DONTCARE_OVERLAP = 0.5

TP, FP, IGNORED = 1, 0, -1


def bev_corners(box7):
    """Footprint of ``(x, y, z, h, w, l, ry)`` in the camera x-z plane, counter-clockwise."""
    x, _, z, _, w, l, ry = box7
    c, s = math.cos(ry), math.sin(ry)
    # heading along local x (length), rotation about camera y
    local = ((l / 2, w / 2), (-l / 2, w / 2), (-l / 2, -w / 2), (l / 2, -w / 2))
    pts = [(x + c * dx + s * dz, z - s * dx + c * dz) for dx, dz in local]
    if polygon_area(pts) < 0:
        pts.reverse()
    return pts


def polygon_area(pts):
    """Signed shoelace area; positive for counter-clockwise order."""
    total = 0.0
    n = len(pts)
    for i in range(n):
        x0, y0 = pts[i]
        x1, y1 = pts[(i + 1) % n]
        total += x0 * y1 - x1 * y0
    return total / 2


def clip_convex(subject, clip):
    """Sutherland-Hodgman: part of ``subject`` inside the counter-clockwise convex ``clip``."""
    out = list(subject)
    n = len(clip)
    for i in range(n):
        if not out:
            break
        ax, ay = clip[i]
        bx, by = clip[(i + 1) % n]
        inp, out = out, []

        def side(p):
            return (bx - ax) * (p[1] - ay) - (by - ay) * (p[0] - ax)

        for j in range(len(inp)):
            cur, prev = inp[j], inp[j - 1]
            s_cur, s_prev = side(cur), side(prev)
            if s_cur >= 0:
                if s_prev < 0:
                    out.append(_intersect(prev, cur, s_prev, s_cur))
                out.append(cur)
            elif s_prev >= 0:
                out.append(_intersect(prev, cur, s_prev, s_cur))
    return out


def _intersect(p, q, sp, sq):
    t = sp / (sp - sq)
    return (p[0] + t * (q[0] - p[0]), p[1] + t * (q[1] - p[1]))


def bev_intersection(a, b):
    poly = clip_convex(bev_corners(a), bev_corners(b))
    return max(polygon_area(poly), 0.0) if len(poly) >= 3 else 0.0


def oriented_iou_3d(a, b) -> float:
    """3D IoU of two yaw-rotated KITTI boxes (location at the bottom face, y pointing down)."""
    for box in (a, b):
        if min(box[3:6]) <= 0:
            raise InvalidBoxError(f"box {tuple(box)} has non-positive dimensions")
    area = bev_intersection(a, b)
    if area <= 0:
        return 0.0
    # height spans [y - h, y]
    top = max(a[1] - a[3], b[1] - b[3])
    bottom = min(a[1], b[1])
    inter = area * max(bottom - top, 0.0)
    if inter <= 0:
        return 0.0
    vol_a = a[3] * a[4] * a[5]
    vol_b = b[3] * b[4] * b[5]
    return min(max(inter / (vol_a + vol_b - inter), 0.0), 1.0)


def is_eligible(gt: Box3D, difficulty: str) -> bool:
    min_h, max_occ, max_trunc = DIFFICULTY_RULES[difficulty]
    return gt.height_2d >= min_h and gt.occlusion <= max_occ and gt.truncation <= max_trunc


def _overlap_2d_over_det(det_box, region):
    iw = min(det_box[2], region[2]) - max(det_box[0], region[0])
    ih = min(det_box[3], region[3]) - max(det_box[1], region[1])
    if iw <= 0 or ih <= 0:
        return 0.0
    area = (det_box[2] - det_box[0]) * (det_box[3] - det_box[1])
    return iw * ih / area if area > 0 else 0.0


def score_order(scores):
    """Indices sorting detections by descending score, stable among ties."""
    return sorted(range(len(scores)), key=lambda i: -scores[i])


@dataclass
class MatchResult:
    flags: np.ndarray  # per input detection: TP, FP or IGNORED
    scores: np.ndarray
    n_gt: int  # eligible ground truths
    fn: int


def match_detections(
    dets: Sequence[Box3D],
    gts: Sequence[Box3D],
    iou_threshold: float,
    difficulty: str,
    cls: str,
) -> MatchResult:
    """Greedy score-ordered matching for one class, difficulty and frame.

    A detection that cannot claim an eligible ground truth is ignored
    (neither TP nor FP) when it overlaps a same-class ground truth excluded
    by the difficulty rules, or lies mostly inside a DontCare region.
    """
    dets = [d for d in dets if d.cls == cls]
    same = [g for g in gts if g.cls == cls]
    eligible = [g for g in same if is_eligible(g, difficulty)]
    excluded = [g for g in same if not is_eligible(g, difficulty)]
    dontcare = [g for g in gts if g.is_dontcare]

    scores = np.array([1.0 if d.score is None else d.score for d in dets], dtype=np.float64)
    flags = np.full(len(dets), FP, dtype=np.int8)
    taken = [False] * len(eligible)
    taken_excluded = [False] * len(excluded)
    for i in score_order(scores):
        box = dets[i].box7()
        best, best_iou = -1, iou_threshold
        for j, g in enumerate(eligible):
            if taken[j]:
                continue
            iou = oriented_iou_3d(box, g.box7())
            if iou >= best_iou and (best < 0 or iou > best_iou):
                best, best_iou = j, iou
        if best >= 0:
            taken[best] = True
            flags[i] = TP
            continue
        for j, g in enumerate(excluded):
            if not taken_excluded[j] and oriented_iou_3d(box, g.box7()) >= iou_threshold:
                taken_excluded[j] = True
                flags[i] = IGNORED
                break
        else:
            if any(_overlap_2d_over_det(dets[i].bbox2d, g.bbox2d) >= DONTCARE_OVERLAP for g in dontcare):
                flags[i] = IGNORED
    return MatchResult(flags, scores, len(eligible), len(eligible) - sum(taken))


def pr_curve(tp_flags, n_gt, scores=None):
    """Precision/recall at every distinct score threshold.

    ``tp_flags`` holds 1 for TP, 0 for FP and -1 for ignored detections.
    Without ``scores`` the flags are taken to be in descending score order
    with no ties.
    """
    flags = np.asarray(tp_flags, dtype=np.int64)
    if scores is None:
        scores = -np.arange(len(flags), dtype=np.float64)
    scores = np.asarray(scores, dtype=np.float64)
    keep = flags != IGNORED
    flags, scores = flags[keep], scores[keep]
    order = np.argsort(-scores, kind="stable")
    flags, scores = flags[order], scores[order]
    tp = np.cumsum(flags == TP)
    fp = np.cumsum(flags == FP)
    # last detection of each tie group closes a threshold
    last = np.flatnonzero(np.append(scores[1:] != scores[:-1], True)) if len(scores) else np.zeros(0, int)
    tp, fp = tp[last], fp[last]
    recall = tp / n_gt
    precision = tp / np.maximum(tp + fp, 1)
    return recall, precision


def average_precision_r40(tp_flags, n_gt, scores=None) -> float:
    """AP in percent: mean interpolated precision at recall 1/40, 2/40, ..., 1."""
    if n_gt < 1:
        raise UndefinedAPError("AP is undefined without eligible ground truth")
    recall, precision = pr_curve(tp_flags, n_gt, scores)
    levels = np.arange(1, N_RECALL + 1) / N_RECALL
    if len(recall) == 0:
        return 0.0
    # running max from the right gives max precision at recall >= r
    best_from = np.maximum.accumulate(precision[::-1])[::-1]
    pos = np.searchsorted(recall, levels, side="left")
    interp = np.where(pos < len(recall), best_from[np.minimum(pos, len(recall) - 1)], 0.0)
    return float(100.0 * interp.mean())


@dataclass
class ApTable:
    """AP (percent) per class and difficulty; ``None`` marks an undefined cell."""

    ap: dict = field(default_factory=dict)  # (class, difficulty) -> float | None

    def __getitem__(self, key):
        return self.ap[key]

    def __setitem__(self, key, value):
        self.ap[key] = value

    @classmethod
    def from_rows(cls, rows: Mapping[str, Sequence[float]]):
        table = cls()
        for c, values in rows.items():
            for d, v in zip(DIFFICULTIES, values):
                table[(c, d)] = v
        return table

    def values(self):
        out = []
        for c in CLASSES:
            for d in DIFFICULTIES:
                v = self.ap.get((c, d))
                if v is None:
                    raise IncompleteTableError(f"AP for {c}/{d} is missing")
                out.append(v)
        return out


def mean_average_precision(table) -> float:
    """Unweighted mean over the 3 x 3 class/difficulty cells."""
    if isinstance(table, ApTable):
        values = table.values()
    else:
        values = list(table)
        if len(values) != len(CLASSES) * len(DIFFICULTIES):
            raise IncompleteTableError(f"expected 9 AP values, got {len(values)}")
    return float(sum(values) / len(values))


def evaluate(frames, iou_thresholds=None) -> ApTable:
    """AP table over ``frames``, an iterable of ``(detections, ground_truths)`` per image."""
    thresholds = dict(DEFAULT_IOU_THRESHOLDS, **(iou_thresholds or {}))
    frames = list(frames)
    table = ApTable()
    for c in CLASSES:
        for d in DIFFICULTIES:
            flags, scores, n_gt = [], [], 0
            for dets, gts in frames:
                res = match_detections(dets, gts, thresholds[c], d, c)
                flags.append(res.flags)
                scores.append(res.scores)
                n_gt += res.n_gt
            if n_gt == 0:
                table[(c, d)] = None
                continue
            table[(c, d)] = average_precision_r40(
                np.concatenate(flags) if flags else [], n_gt, np.concatenate(scores) if scores else []
            )
    return table
