"""Small dense-array kernel with reverse-mode differentiation.

Every op accepts plain arrays or :class:`Var` handles. With plain arrays it
just computes; if any argument is a ``Var`` the result is recorded on that
variable's :class:`Tape` and ``Tape.backward`` can later push gradients
back to the leaves. Inputs may carry a leading batch axis; the feature
axis is always the last one.
"""

from __future__ import annotations

import io
import math
import struct
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from ._rng import XorShift64Star
from .exceptions import MalformedInputError, NumericError, ShapeError


class Tape:
    """Linear record of one forward pass; node order is a topological order."""

    def __init__(self):
        self.values = []
        self.parents = []
        self.vjps = []
        self.names = []

    def __len__(self):
        return len(self.values)

    def leaf(self, value, name=None) -> "Var":
        value = np.array(value, dtype=np.float64)
        return self._push(value, (), None, name)

    def _push(self, value, parents, vjp, name=None):
        self.values.append(value)
        self.parents.append(parents)
        self.vjps.append(vjp)
        self.names.append(name)
        return Var(self, len(self.values) - 1)

    def backward(self, output: "Var", seed=None) -> dict:
        """Gradients of ``seed . output`` for every leaf, keyed by leaf ``Var``.

        Named leaves are also reachable by name through :meth:`Gradients.by_name`.
        """
        if output.tape is not self:
            raise ValueError("output does not belong to this tape")
        out_val = self.values[output.index]
        seed = np.ones_like(out_val) if seed is None else np.asarray(seed, dtype=np.float64)
        if seed.shape != out_val.shape:
            raise ShapeError(f"seed shape {seed.shape} does not match output shape {out_val.shape}")
        grads = [None] * (output.index + 1)
        grads[output.index] = seed
        for i in range(output.index, -1, -1):
            g = grads[i]
            if g is None or self.vjps[i] is None:
                continue
            for parent, pg in zip(self.parents[i], self.vjps[i](g)):
                if pg is None:
                    continue
                grads[parent] = pg if grads[parent] is None else grads[parent] + pg
        result = Gradients()
        for i in range(output.index + 1):
            if not self.parents[i] and self.vjps[i] is None:
                g = grads[i] if grads[i] is not None else np.zeros_like(self.values[i])
                result[Var(self, i)] = g
                if self.names[i] is not None:
                    result.names[self.names[i]] = g
        return result


class Gradients(dict):
    def __init__(self):
        super().__init__()
        self.names = {}

    def by_name(self, name):
        return self.names[name]


class Var:
    __slots__ = ("tape", "index")

    def __init__(self, tape, index):
        self.tape = tape
        self.index = index

    @property
    def value(self):
        return self.tape.values[self.index]

    @property
    def shape(self):
        return self.value.shape

    def __hash__(self):
        return hash((id(self.tape), self.index))

    def __eq__(self, other):
        return isinstance(other, Var) and other.tape is self.tape and other.index == self.index

    def __repr__(self):
        return f"Var(#{self.index}, shape={self.shape})"


def value_of(x):
    """Underlying array; float dtypes (longdouble included) pass through unchanged."""
    if isinstance(x, Var):
        return x.value
    arr = np.asarray(x)
    return arr if arr.dtype.kind == "f" else arr.astype(np.float64)


def _tape_of(*args):
    for a in args:
        if isinstance(a, Var):
            return a.tape
    return None


def _record(value, args, vjp):
    tape = _tape_of(*args)
    if tape is None:
        return value
    parents = []
    slots = []
    for k, a in enumerate(args):
        if isinstance(a, Var):
            if a.tape is not tape:
                raise ValueError("cannot mix variables from different tapes")
            parents.append(a.index)
            slots.append(k)

    def picked(g):
        full = vjp(g)
        return [full[k] for k in slots]

    return tape._push(value, tuple(parents), picked)


def _unbroadcast(grad, shape):
    """Sum ``grad`` down to ``shape`` after numpy broadcasting."""
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


def _batch_shape(*arrays):
    """Broadcast leading (batch) shapes; channel axes must already agree."""
    try:
        return np.broadcast_shapes(*(a.shape[:-1] for a in arrays))
    except ValueError:
        raise ShapeError(f"batch shapes do not broadcast: {[a.shape for a in arrays]}") from None


@dataclass(frozen=True, eq=False)
class Affine:
    """``y = W x + b``.

    ``weight`` is ``(out, in)`` and ``bias`` ``(out,)``. Either may carry
    leading batch axes (one weight per sample), which broadcast against the
    input's batch axes.
    """

    weight: object
    bias: object

    def __post_init__(self):
        w, b = value_of(self.weight), value_of(self.bias)
        if w.ndim < 2 or b.ndim < 1 or b.shape[-1] != w.shape[-2]:
            raise ShapeError(f"affine weight {w.shape} and bias {b.shape} are inconsistent")

    @property
    def in_dim(self):
        return value_of(self.weight).shape[-1]

    @property
    def out_dim(self):
        return value_of(self.weight).shape[-2]


@dataclass(frozen=True, eq=False)
class Mlp:
    """Affine layers with ReLU between them (none after the last)."""

    layers: tuple

    def __post_init__(self):
        for a, b in zip(self.layers, self.layers[1:]):
            if a.out_dim != b.in_dim:
                raise ShapeError(f"MLP layers chain {a.out_dim} -> {b.in_dim}")

    @property
    def in_dim(self):
        return self.layers[0].in_dim

    @property
    def out_dim(self):
        return self.layers[-1].out_dim

    def __call__(self, x):
        return mlp_forward(self, x)


def affine_forward(layer: Affine, x):
    w, b, xv = value_of(layer.weight), value_of(layer.bias), value_of(x)
    if xv.shape[-1:] != w.shape[-1:]:
        raise ShapeError(f"affine expects input (..., {w.shape[-1]}), got {xv.shape} for weight {w.shape}")
    if w.ndim == 2:
        out = xv @ w.T + b
    else:
        _batch_shape(xv, w[..., 0])
        out = (w @ xv[..., None])[..., 0] + b

    def vjp(g):
        if w.ndim == 2 and xv.ndim <= 2:
            flat_g = g.reshape(-1, g.shape[-1])
            flat_x = xv.reshape(-1, xv.shape[-1])
            return (flat_g.T @ flat_x, _unbroadcast(g, b.shape), _unbroadcast(g @ w, xv.shape))
        dw = g[..., :, None] * xv[..., None, :]
        dx = (g[..., None, :] @ w)[..., 0, :]
        return (_unbroadcast(dw, w.shape), _unbroadcast(g, b.shape), _unbroadcast(dx, xv.shape))

    return _record(out, (layer.weight, layer.bias, x), vjp)


def mlp_forward(mlp: Mlp, x):
    for k, layer in enumerate(mlp.layers):
        if k:
            x = relu(x)
        x = affine_forward(layer, x)
    return x


def softmax(x):
    """Softmax over the last (channel) axis, shifted by the max for stability."""
    xv = value_of(x)
    if xv.shape[-1] < 1:
        raise ShapeError("softmax needs at least one channel")
    e = np.exp(xv - xv.max(axis=-1, keepdims=True))
    s = e / e.sum(axis=-1, keepdims=True)

    def vjp(g):
        return (s * (g - (g * s).sum(axis=-1, keepdims=True)),)

    return _record(s, (x,), vjp)


def hadamard(a, b):
    av, bv = value_of(a), value_of(b)
    if av.shape[-1:] != bv.shape[-1:]:
        raise ShapeError(f"hadamard operands differ in shape: {av.shape} vs {bv.shape}")
    _batch_shape(av, bv)
    return _record(
        av * bv, (a, b), lambda g: (_unbroadcast(g * bv, av.shape), _unbroadcast(g * av, bv.shape))
    )


def concat(parts: Sequence):
    vals = [value_of(p) for p in parts]
    if not vals:
        return np.zeros(0)
    shapes = [v.shape for v in vals]
    lead = _batch_shape(*(v for v in vals if v.ndim))
    out = np.concatenate([np.broadcast_to(v, lead + v.shape[-1:]) for v in vals], axis=-1)
    bounds = np.cumsum([0] + [v.shape[-1] for v in vals])

    def vjp(g):
        return tuple(
            _unbroadcast(g[..., bounds[k] : bounds[k + 1]], shapes[k]) for k in range(len(vals))
        )

    return _record(out, tuple(parts), vjp)


def relu(x):
    xv = value_of(x)
    mask = xv > 0
    return _record(np.where(mask, xv, 0.0), (x,), lambda g: (g * mask,))


def square_sum(x):
    """Scalar ``sum(x**2)``; handy as a test loss."""
    xv = value_of(x)
    return _record(np.array((xv * xv).sum()), (x,), lambda g: (2.0 * g * xv,))


def add(a, b):
    av, bv = value_of(a), value_of(b)
    if av.shape[-1:] != bv.shape[-1:]:
        raise ShapeError(f"add operands differ in shape: {av.shape} vs {bv.shape}")
    _batch_shape(av, bv)
    return _record(av + bv, (a, b), lambda g: (_unbroadcast(g, av.shape), _unbroadcast(g, bv.shape)))


def backward(tape: Tape, output_seed=None, output: Var | None = None):
    """Reverse pass from ``output`` (default: the last recorded node)."""
    if output is None:
        output = Var(tape, len(tape) - 1)
    return tape.backward(output, output_seed)


def gradient(f: Callable, x):
    """Tape gradient of the scalar function ``f`` at ``x``."""
    tape = Tape()
    xv = tape.leaf(x)
    out = f(xv)
    if not isinstance(out, Var):
        return np.zeros_like(np.asarray(x, dtype=np.float64))
    return tape.backward(out)[xv]


def relative_errors(analytic, numeric):
    analytic = np.asarray(analytic, dtype=np.float64)
    numeric = np.asarray(numeric, dtype=np.float64)
    denom = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), 1e-8)
    return np.abs(analytic - numeric) / denom


def central_difference(f: Callable, x, eps=1e-6):
    x = np.array(x, dtype=np.float64)
    grad = np.empty_like(x)
    flat_x = x.reshape(-1)
    flat_g = grad.reshape(-1)
    for i in range(flat_x.size):
        orig = flat_x[i]
        flat_x[i] = orig + eps
        hi = float(np.asarray(value_of(f(x))).item())
        flat_x[i] = orig - eps
        lo = float(np.asarray(value_of(f(x))).item())
        flat_x[i] = orig
        if not (math.isfinite(hi) and math.isfinite(lo)):
            raise NumericError(f"non-finite function value near coordinate {i}")
        flat_g[i] = (hi - lo) / (2 * eps)
    return grad


def finite_difference_check(f: Callable, x, eps=1e-6, analytic=None) -> float:
    """Max relative error between a gradient and central differences.

    ``analytic`` defaults to the tape gradient of ``f``; pass an explicit
    array to check some other gradient (a corrupted one, for instance).
    """
    if analytic is None:
        analytic = gradient(f, x)
    numeric = central_difference(f, x, eps)
    return float(relative_errors(analytic, numeric).max(initial=0.0))


def glorot_uniform(fan_out, fan_in, seed, name):
    limit = math.sqrt(6.0 / (fan_in + fan_out))
    return XorShift64Star(seed, name).uniform(-limit, limit, (fan_out, fan_in))


def init_affine(in_dim, out_dim, seed, name) -> Affine:
    """Glorot-uniform weight from the ``name`` stream, zero bias."""
    return Affine(glorot_uniform(out_dim, in_dim, seed, name + ".weight"), np.zeros(out_dim))


# Weight file layout, all integers little-endian:
#   magic b"VPFW", u32 version (1), u32 tensor count, then per tensor
#   u16 name length, UTF-8 name, u8 ndim, ndim x u32 dims,
#   prod(dims) float64 values in row-major order.
_MAGIC = b"VPFW"
_VERSION = 1


def write_tensors(named: dict) -> bytes:
    out = io.BytesIO()
    out.write(_MAGIC)
    out.write(struct.pack("<II", _VERSION, len(named)))
    for name, arr in named.items():
        arr = np.ascontiguousarray(arr, dtype="<f8")
        encoded = name.encode("utf-8")
        out.write(struct.pack("<H", len(encoded)))
        out.write(encoded)
        out.write(struct.pack("<B", arr.ndim))
        out.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
        out.write(arr.tobytes())
    return out.getvalue()


def read_tensors(raw: bytes) -> dict:
    view = memoryview(raw)
    if bytes(view[:4]) != _MAGIC:
        raise MalformedInputError("not a weight file (bad magic)")
    pos = 4

    def take(fmt):
        nonlocal pos
        size = struct.calcsize(fmt)
        if pos + size > len(view):
            raise MalformedInputError(f"weight file truncated at byte {pos}")
        vals = struct.unpack_from(fmt, view, pos)
        pos += size
        return vals

    version, count = take("<II")
    if version != _VERSION:
        raise MalformedInputError(f"unsupported weight file version {version}")
    named = {}
    for _ in range(count):
        (name_len,) = take("<H")
        if pos + name_len > len(view):
            raise MalformedInputError(f"weight file truncated at byte {pos}")
        name = bytes(view[pos : pos + name_len]).decode("utf-8")
        pos += name_len
        (ndim,) = take("<B")
        shape = take(f"<{ndim}I")
        n = int(np.prod(shape, dtype=np.int64))
        if pos + 8 * n > len(view):
            raise MalformedInputError(f"tensor {name!r} truncated at byte {pos}")
        named[name] = np.frombuffer(view[pos : pos + 8 * n], dtype="<f8").reshape(shape).astype(np.float64)
        pos += 8 * n
    if pos != len(view):
        raise MalformedInputError(f"{len(view) - pos} trailing bytes after last tensor")
    return named
