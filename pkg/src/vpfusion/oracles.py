"""Slow, literal reference implementations used to cross-check the fast paths.

Nothing here shares code with the module it checks.
"""

from __future__ import annotations

import itertools
import math


def occlusion_counts_bruteforce(rois, ignore_depth=False):
    """O(n^2) double loop over ``(u_min, v_min, u_max, v_max, depth)`` rows."""
    rows = [tuple(float(x) for x in r) for r in rois]
    counts = []
    for i, a in enumerate(rows):
        n = 0
        for j, b in enumerate(rows):
            if i == j:
                continue
            contains = b[0] <= a[0] and b[1] <= a[1] and b[2] >= a[2] and b[3] >= a[3]
            if contains and (ignore_depth or b[4] < a[4]):
                n += 1
        counts.append(n)
    return counts


def ap_r40_bruteforce(flags, scores, n_gt):
    """AP@R40 straight from the definition: one PR point per score threshold."""
    kept = [(s, f) for f, s in zip(flags, scores) if f != -1]
    points = []
    for t in sorted({s for s, _ in kept}, reverse=True):
        tp = sum(1 for s, f in kept if s >= t and f == 1)
        fp = sum(1 for s, f in kept if s >= t and f == 0)
        points.append((tp / n_gt, tp / (tp + fp) if tp + fp else 0.0))
    total = 0.0
    for k in range(1, 41):
        r = k / 40
        total += max((p for rec, p in points if rec >= r), default=0.0)
    return 100.0 * total / 40


def greedy_match_bruteforce(det_boxes, det_scores, gt_boxes, iou_fn, threshold):
    """Score-ordered greedy assignment on a full IoU matrix; returns (tp flags, fn)."""
    order = sorted(range(len(det_boxes)), key=lambda i: -det_scores[i])
    iou = [[iou_fn(d, g) for g in gt_boxes] for d in det_boxes]
    used = set()
    flags = [0] * len(det_boxes)
    for i in order:
        cands = [(iou[i][j], -j) for j in range(len(gt_boxes)) if j not in used and iou[i][j] >= threshold]
        if cands:
            _, neg_j = max(cands)
            used.add(-neg_j)
            flags[i] = 1
    return flags, len(gt_boxes) - len(used)


def project_homogeneous(calib, point):
    """LiDAR point -> (u, v, depth) through explicit 4x4 matrices, pure Python."""

    def mat4(rows):
        m = [[0.0] * 4 for _ in range(4)]
        for r, row in enumerate(rows):
            for c, v in enumerate(row):
                m[r][c] = float(v)
        m[3][3] = 1.0
        return m

    def mul(a, b):
        return [[sum(a[i][k] * b[k][j] for k in range(4)) for j in range(4)] for i in range(4)]

    r0 = mat4([list(r) + [0.0] for r in calib.r0_rect])
    tr = mat4(calib.tr_velo_to_cam)
    chain = mul(r0, tr)
    cam = [sum(chain[i][k] * v for k, v in enumerate((*point, 1.0))) for i in range(4)]
    y = [sum(float(calib.p2[i][k]) * cam[k] for k in range(4)) for i in range(3)]
    return y[0] / y[2], y[1] / y[2], y[2]


def box_volume_overlap_axis_aligned(a, b):
    """3D IoU of two yaw-0 boxes by interval arithmetic (x, z footprint; y downward)."""
    ax, ay, az, ah, aw, al, _ = a
    bx, by, bz, bh, bw, bl, _ = b

    def overlap(c0, s0, c1, s1):
        return max(0.0, min(c0 + s0 / 2, c1 + s1 / 2) - max(c0 - s0 / 2, c1 - s1 / 2))

    ox = overlap(ax, al, bx, bl)
    oz = overlap(az, aw, bz, bw)
    oy = max(0.0, min(ay, by) - max(ay - ah, by - bh))
    inter = ox * oy * oz
    return inter / (ah * aw * al + bh * bw * bl - inter)


def bilinear_cell_center(data, u, v):
    """Sample ``data[row][col]`` at continuous (u, v) with cell centers at +0.5, clamped."""
    h, w = len(data), len(data[0])
    x = min(max(u - 0.5, 0.0), w - 1)
    y = min(max(v - 0.5, 0.0), h - 1)
    x0, y0 = int(math.floor(x)), int(math.floor(y))
    x1, y1 = min(x0 + 1, w - 1), min(y0 + 1, h - 1)
    fx, fy = x - x0, y - y0
    return (
        data[y0][x0] * (1 - fx) * (1 - fy)
        + data[y0][x1] * fx * (1 - fy)
        + data[y1][x0] * (1 - fx) * fy
        + data[y1][x1] * fx * fy
    )


def roi_align_reference(data, roi, samples=4):
    u0, v0, u1, v1 = roi[:4]
    fr = (0.25, 0.75) if samples == 4 else (0.5,)
    pts = [(u0 + (u1 - u0) * a, v0 + (v1 - v0) * b) for b, a in itertools.product(fr, fr)]
    return sum(bilinear_cell_center(data, u, v) for u, v in pts) / len(pts)


def _lin(named, net, x):
    """Apply network ``net`` from flat named weights, ReLU between layers."""
    k = 0
    while f"{net}.{k}.weight" in named:
        if k:
            x = [max(0.0, v) for v in x]
        w = named[f"{net}.{k}.weight"].tolist()
        b = named[f"{net}.{k}.bias"].tolist()
        x = [sum(wi * xi for wi, xi in zip(row, x)) + bi for row, bi in zip(w, b)]
        k += 1
    return x


def _softmax(x):
    m = max(x)
    e = [math.exp(v - m) for v in x]
    z = sum(e)
    return [v / z for v in e]


def _had(*vs):
    out = list(vs[0])
    for v in vs[1:]:
        out = [a * b for a, b in zip(out, v)]
    return out


def fusion_reference(p, b_v, b_p, named):
    """Every intermediate of the fusion chain for one pair, as plain lists."""
    p = [float(x) for x in p]
    b_v = [float(x) for x in b_v]
    b_p = [float(x) for x in b_p]
    out = {}
    out["p_feat"] = _lin(named, "m", p)
    out["p_v"] = _lin(named, "m_v", out["p_feat"])
    out["p_p"] = _lin(named, "m_p", out["p_feat"])
    bv1, pv1 = _lin(named, "bv1", b_v), _lin(named, "pv1", out["p_v"])
    out["b_v_rw"] = _had(_softmax(_had(bv1, pv1)), _lin(named, "pv2", out["p_v"]), _lin(named, "bv2", b_v))
    bp1, pp1 = _lin(named, "bp1", b_p), _lin(named, "pp1", out["p_p"])
    out["b_p_rw"] = _had(_softmax(_had(bp1, pp1)), _lin(named, "pp2", out["p_p"]), _lin(named, "bp2", b_p))
    bvr, bpr = out["b_v_rw"], out["b_p_rw"]
    out["b_v_t"] = _had(_softmax(_had(_lin(named, "bv3", bvr), _lin(named, "bp3", bpr))), _lin(named, "bv5", bvr))
    out["b_p_t"] = _had(_softmax(_had(_lin(named, "bv4", bvr), _lin(named, "bp4", bpr))), _lin(named, "bp5", bpr))
    out["p_t"] = _lin(named, "p_net", out["p_feat"])
    out["s"] = _lin(named, "s_net", out["b_v_t"] + out["b_p_t"] + out["p_t"])
    out["b_v_fused"] = _lin(named, "s_v", out["s"])
    out["b_p_fused"] = _lin(named, "s_p", out["s"])
    return out
