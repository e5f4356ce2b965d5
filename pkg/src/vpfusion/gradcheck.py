"""Finite-difference verification of the full fusion chain."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import tensor_core as tc
from .exceptions import NumericError
from .vpf_layer import VPFConfig, VPFWeights, fusion_forward, fusion_loss, init_weights

# Step for the chain check. Smaller steps hit the rounding floor on the
# tiniest partials; steps near 1e-3 start crossing ReLU kinks in ``m``.
CHAIN_EPS = 1e-4
TOLERANCE = 1e-5


@dataclass
class GradcheckReport:
    c_v: int
    c_p: int
    seed: int
    eps: float
    per_tensor: dict = field(default_factory=dict)  # name -> max relative error
    coordinates: int = 0

    @property
    def max_rel_error(self):
        return max(self.per_tensor.values(), default=0.0)

    @property
    def worst(self):
        return max(self.per_tensor, key=self.per_tensor.get)


def random_problem(c_v, c_p, seed):
    """Random pair inputs plus seeded weights with non-zero biases.

    Returns ``(inputs, weight_arrays)``: two flat ``{name: array}`` dicts.
    """
    rng = np.random.default_rng(seed)
    inputs = {
        "p": rng.uniform(0.0, 1.0, 4),
        "b_v": rng.normal(size=c_v),
        "b_p": rng.normal(size=c_p),
    }
    named = init_weights(VPFConfig(c_v=c_v, c_p=c_p, seed=seed)).named_arrays()
    named = {k: v.copy() for k, v in named.items()}
    for k in named:
        if k.endswith(".bias"):
            named[k] = rng.uniform(-0.1, 0.1, named[k].shape)
    return inputs, named


def analytic_gradients(inputs, named):
    tape = tc.Tape()
    leaves = {k: tape.leaf(v, k) for k, v in inputs.items()}
    w = VPFWeights.from_named(named).on_tape(tape)
    loss = fusion_loss(leaves["p"], leaves["b_v"], leaves["b_p"], w)
    grads = tape.backward(loss)
    return {k: grads.by_name(k) for k in (*inputs, *named)}


def _batched_losses(inputs, named):
    w = VPFWeights.from_named(named)
    out = fusion_forward(inputs["p"], inputs["b_v"], inputs["b_p"], w)
    return (out.b_v_fused**2).sum(axis=-1) + (out.b_p_fused**2).sum(axis=-1)


def numeric_gradients(inputs, named, eps=CHAIN_EPS, only=None, dtype=np.longdouble):
    """Central differences ``(L(x + eps) - L(x - eps)) / 2 eps`` for every coordinate.

    All ``2n`` perturbations of one tensor run as a single batched forward
    pass (per-sample weights for weight tensors). The loss is evaluated in
    ``dtype``; extended precision keeps the rounding floor of the difference
    quotient well below the smallest partials of the chain.
    """
    inputs = {k: np.asarray(v, dtype=dtype) for k, v in inputs.items()}
    named = {k: np.asarray(v, dtype=dtype) for k, v in named.items()}
    out = {}
    for store in (inputs, named):
        for name, arr in store.items():
            if only is not None and name not in only:
                continue
            n = arr.size
            bumps = np.concatenate([np.eye(n, dtype=dtype), -np.eye(n, dtype=dtype)]) * dtype(eps)
            batch = arr.reshape(1, -1) + bumps
            saved = store[name]
            store[name] = batch.reshape((2 * n,) + arr.shape)
            try:
                losses = _batched_losses(inputs, named)
            finally:
                store[name] = saved
            if not np.all(np.isfinite(losses)):
                raise NumericError(f"non-finite loss while perturbing {name}")
            out[name] = ((losses[:n] - losses[n:]) / (2 * dtype(eps))).astype(np.float64).reshape(arr.shape)
    return out


def compare(analytic, numeric):
    return {k: float(tc.relative_errors(analytic[k], numeric[k]).max(initial=0.0)) for k in analytic}


def check_fusion_gradients(c_v=8, c_p=16, seed=0, eps=CHAIN_EPS) -> GradcheckReport:
    inputs, named = random_problem(c_v, c_p, seed)
    analytic = analytic_gradients(inputs, named)
    numeric = numeric_gradients(inputs, named, eps)
    report = GradcheckReport(c_v, c_p, seed, eps, compare(analytic, numeric))
    report.coordinates = sum(a.size for a in analytic.values())
    return report


def corrupted_control(c_v=8, c_p=16, seed=0, eps=CHAIN_EPS, target="s_net.0.weight") -> float:
    """Max relative error after corrupting one analytic partial; should be large."""
    inputs, named = random_problem(c_v, c_p, seed)
    analytic = analytic_gradients(inputs, named)
    numeric = numeric_gradients(inputs, named, eps, only={target})
    bad = analytic[target].copy()
    flat = bad.reshape(-1)
    flat[0] += 0.5 * abs(flat[0]) + 1e-3
    return float(tc.relative_errors(bad, numeric[target]).max())
