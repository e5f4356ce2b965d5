"""Voxel-pixel fusion: parameter features, re-weighting, cross attention, write-back.

All forward functions are built from :mod:`vpfusion.tensor_core` ops, so
they run on plain arrays (optionally batched over pairs along axis 0) or
on tape variables for exact gradients.
"""

from __future__ import annotations

from dataclasses import dataclass, fields
from typing import Mapping, Sequence

import numpy as np

from . import tensor_core as tc
from .exceptions import ConfigError, MalformedInputError, NotFoundError, ShapeError
from .image_ops import FeatureMap, roi_align_batch, scatter_center_cell, scatter_roi_align

PARAM_DIM = 16
SCATTER_MODES = ("bilinear", "center_cell")


@dataclass(frozen=True)
class VPFConfig:
    c_v: int = 64
    c_p: int = 64
    param_dim: int = PARAM_DIM
    seed: int = 0
    m_depth: int = 2  # layers in the 4 -> 16 parameter MLP
    net_depth: int = 1  # layers in every other named network

    def __post_init__(self):
        if self.c_v < 1 or self.c_p < 1:
            raise ConfigError(f"channel counts must be positive, got c_v={self.c_v}, c_p={self.c_p}")
        if self.param_dim != PARAM_DIM:
            raise ConfigError(f"param_dim is fixed at {PARAM_DIM}, got {self.param_dim}")
        if self.m_depth < 1 or self.net_depth < 1:
            raise ConfigError("network depths must be at least 1")

    def layer_dims(self):
        """``{field: (in_dim, out_dim)}`` for every network in :class:`VPFWeights`."""
        cv, cp, d = self.c_v, self.c_p, self.param_dim
        s = cv + cp + d
        return {
            "m": (4, d),
            "m_v": (d, cv),
            "m_p": (d, cp),
            "bv1": (cv, cv),
            "bv2": (cv, cv),
            "pv1": (cv, cv),
            "pv2": (cv, cv),
            "bp1": (cp, cp),
            "bp2": (cp, cp),
            "pp1": (cp, cp),
            "pp2": (cp, cp),
            "bv3": (cv, cv),
            "bp3": (cp, cv),
            "bv4": (cv, cp),
            "bp4": (cp, cp),
            "bv5": (cv, cv),
            "bp5": (cp, cp),
            "p_net": (d, d),
            "s_net": (s, s),
            "s_v": (s, cv),
            "s_p": (s, cp),
        }


@dataclass(frozen=True, eq=False)
class VPFWeights:
    """Every learnable network of the layer, one :class:`~vpfusion.tensor_core.Mlp` each.

    ``m`` lifts the 4 pair parameters to 16; ``m_v``/``m_p`` split them per
    stream; ``bv*``/``pv*``/``bp*``/``pp*`` are the per-stream feature and
    parameter networks; ``p_net``, ``s_net``, ``s_v``, ``s_p`` produce the
    shared features and the two residuals.
    """

    m: tc.Mlp
    m_v: tc.Mlp
    m_p: tc.Mlp
    bv1: tc.Mlp
    bv2: tc.Mlp
    pv1: tc.Mlp
    pv2: tc.Mlp
    bp1: tc.Mlp
    bp2: tc.Mlp
    pp1: tc.Mlp
    pp2: tc.Mlp
    bv3: tc.Mlp
    bp3: tc.Mlp
    bv4: tc.Mlp
    bp4: tc.Mlp
    bv5: tc.Mlp
    bp5: tc.Mlp
    p_net: tc.Mlp
    s_net: tc.Mlp
    s_v: tc.Mlp
    s_p: tc.Mlp

    @property
    def c_v(self):
        return self.bv1.in_dim

    @property
    def c_p(self):
        return self.bp1.in_dim

    def named_arrays(self) -> dict:
        """Flat ``{"bv1.0.weight": array, ...}`` view, in field order."""
        out = {}
        for f in fields(self):
            for k, layer in enumerate(getattr(self, f.name).layers):
                out[f"{f.name}.{k}.weight"] = tc.value_of(layer.weight)
                out[f"{f.name}.{k}.bias"] = tc.value_of(layer.bias)
        return out

    @classmethod
    def from_named(cls, named: Mapping) -> "VPFWeights":
        nets = {}
        for f in fields(cls):
            layers = []
            k = 0
            while f"{f.name}.{k}.weight" in named:
                layers.append(tc.Affine(named[f"{f.name}.{k}.weight"], named[f"{f.name}.{k}.bias"]))
                k += 1
            if not layers:
                raise MalformedInputError(f"weights for network {f.name!r} are missing")
            nets[f.name] = tc.Mlp(tuple(layers))
        weights = cls(**nets)
        weights.check_shapes()
        return weights

    def on_tape(self, tape: tc.Tape) -> "VPFWeights":
        """Copy whose parameters are named leaves of ``tape``."""
        nets = {}
        for f in fields(self):
            layers = []
            for k, layer in enumerate(getattr(self, f.name).layers):
                layers.append(
                    tc.Affine(
                        tape.leaf(tc.value_of(layer.weight), f"{f.name}.{k}.weight"),
                        tape.leaf(tc.value_of(layer.bias), f"{f.name}.{k}.bias"),
                    )
                )
            nets[f.name] = tc.Mlp(tuple(layers))
        return VPFWeights(**nets)

    def with_zero_output(self) -> "VPFWeights":
        """Same weights with ``s_v`` and ``s_p`` zeroed, so both residuals vanish."""
        named = {k: v.copy() for k, v in self.named_arrays().items()}
        for key in named:
            if key.startswith(("s_v.", "s_p.")):
                named[key][...] = 0.0
        return VPFWeights.from_named(named)

    def check_shapes(self):
        cfg = VPFConfig(c_v=self.c_v, c_p=self.c_p)
        for name, (din, dout) in cfg.layer_dims().items():
            net = getattr(self, name)
            if (net.in_dim, net.out_dim) != (din, dout):
                raise ShapeError(f"network {name} maps {net.in_dim}->{net.out_dim}, expected {din}->{dout}")


@dataclass(frozen=True, eq=False)
class FusionOutput:
    b_v_fused: object
    b_p_fused: object
    p_feat: object  # p'
    p_v: object
    p_p: object
    b_v_rw: object  # b_v'
    b_p_rw: object  # b_p'
    b_v_t: object
    b_p_t: object
    p_t: object
    s: object


def init_weights(config: VPFConfig) -> VPFWeights:
    nets = {}
    for name, (din, dout) in config.layer_dims().items():
        depth = config.m_depth if name == "m" else config.net_depth
        dims = [din] + [dout] * depth
        layers = tuple(
            tc.init_affine(dims[k], dims[k + 1], config.seed, f"{name}.{k}") for k in range(depth)
        )
        nets[name] = tc.Mlp(layers)
    return VPFWeights(**nets)


def save_weights(weights: VPFWeights) -> bytes:
    return tc.write_tensors(weights.named_arrays())


def load_weights(raw: bytes) -> VPFWeights:
    return VPFWeights.from_named(tc.read_tensors(raw))


def _check_dim(x, dim, what):
    got = tc.value_of(x).shape[-1:]
    if got != (dim,):
        raise ShapeError(f"{what} must have {dim} channels, got shape {tc.value_of(x).shape}")


def pfg_forward(p, w: VPFWeights):
    """Pair parameters (4) -> pair features (16), voxel (C_v) and pixel (C_p) parameter features."""
    _check_dim(p, 4, "pair parameters")
    p_feat = w.m(p)
    return p_feat, w.m_v(p_feat), w.m_p(p_feat)


def _reweight(b, pf, b1, p1, p2, b2):
    attn = tc.softmax(tc.hadamard(b1(b), p1(pf)))
    return tc.hadamard(tc.hadamard(attn, p2(pf)), b2(b))


def pbw_voxel(b_v, p_v, w: VPFWeights):
    _check_dim(b_v, w.c_v, "voxel features")
    _check_dim(p_v, w.c_v, "voxel parameter features")
    return _reweight(b_v, p_v, w.bv1, w.pv1, w.pv2, w.bv2)


def pbw_pixel(b_p, p_p, w: VPFWeights):
    _check_dim(b_p, w.c_p, "pixel features")
    _check_dim(p_p, w.c_p, "pixel parameter features")
    return _reweight(b_p, p_p, w.bp1, w.pp1, w.pp2, w.bp2)


def vpf_forward(b_v_rw, b_p_rw, p_feat, w: VPFWeights, *, _pfg=(None, None)) -> FusionOutput:
    """Cross attention between the re-weighted streams, shared features, residuals."""
    _check_dim(b_v_rw, w.c_v, "re-weighted voxel features")
    _check_dim(b_p_rw, w.c_p, "re-weighted pixel features")
    _check_dim(p_feat, PARAM_DIM, "pair parameter features")
    b_v_t = tc.hadamard(tc.softmax(tc.hadamard(w.bv3(b_v_rw), w.bp3(b_p_rw))), w.bv5(b_v_rw))
    b_p_t = tc.hadamard(tc.softmax(tc.hadamard(w.bv4(b_v_rw), w.bp4(b_p_rw))), w.bp5(b_p_rw))
    p_t = w.p_net(p_feat)
    s = w.s_net(tc.concat([b_v_t, b_p_t, p_t]))
    return FusionOutput(
        b_v_fused=w.s_v(s),
        b_p_fused=w.s_p(s),
        p_feat=p_feat,
        p_v=_pfg[0],
        p_p=_pfg[1],
        b_v_rw=b_v_rw,
        b_p_rw=b_p_rw,
        b_v_t=b_v_t,
        b_p_t=b_p_t,
        p_t=p_t,
        s=s,
    )


def fusion_forward(p, b_v, b_p, w: VPFWeights) -> FusionOutput:
    """The whole chain for one pair (or a batch of pairs along axis 0)."""
    p_feat, p_v, p_p = pfg_forward(p, w)
    b_v_rw = pbw_voxel(b_v, p_v, w)
    b_p_rw = pbw_pixel(b_p, p_p, w)
    return vpf_forward(b_v_rw, b_p_rw, p_feat, w, _pfg=(p_v, p_p))


def fusion_loss(p, b_v, b_p, w: VPFWeights):
    """``sum(b_v'')**2 + sum(b_p'')**2``, the scalar used for gradient checks."""
    out = fusion_forward(p, b_v, b_p, w)
    return tc.add(tc.square_sum(out.b_v_fused), tc.square_sum(out.b_p_fused))


def fuse_feature_maps(
    lidar_feats: Mapping,
    camera_map: FeatureMap,
    pairs: Sequence,
    w: VPFWeights,
    scatter: str = "bilinear",
    align_samples: int = 4,
):
    """Run the layer on every pair and add its residuals back onto both maps.

    Returns ``(fused_lidar, fused_camera)``. ``fused_lidar`` is a new dict;
    voxels without a pair keep their original array object. The camera
    residuals are deposited through the transpose of the 1x1 RoIAlign read
    (``scatter="bilinear"``) or into the ROI-center cell (``"center_cell"``),
    summed in pair order.
    """
    if scatter not in SCATTER_MODES:
        raise ConfigError(f"scatter must be one of {SCATTER_MODES}, got {scatter!r}")
    fused_lidar = dict(lidar_feats)
    if not pairs:
        return fused_lidar, FeatureMap(camera_map.data.copy(), camera_map.stride)
    keys = [tuple(pr.voxel_index) for pr in pairs]
    missing = [k for k in keys if k not in lidar_feats]
    if missing:
        raise NotFoundError(f"voxel {missing[0]} has a pair but no LiDAR feature")
    rois = np.array([[pr.roi.u_min, pr.roi.v_min, pr.roi.u_max, pr.roi.v_max] for pr in pairs])
    b_v = np.stack([np.asarray(lidar_feats[k], dtype=np.float64) for k in keys])
    b_p = roi_align_batch(camera_map, rois, align_samples)
    params = np.stack([np.asarray(pr.params, dtype=np.float64) for pr in pairs])

    out = fusion_forward(params, b_v, b_p, w)
    for k, key in enumerate(keys):
        fused_lidar[key] = fused_lidar[key] + out.b_v_fused[k]

    data = camera_map.data.copy()
    if scatter == "bilinear":
        scatter_roi_align(data, rois, out.b_p_fused, align_samples)
    else:
        scatter_center_cell(data, rois, out.b_p_fused)
    return fused_lidar, FeatureMap(data, camera_map.stride)
