"""A small reverse-mode differentiation engine over numpy arrays.

Each ``Tensor`` produced by an operation remembers its parents and a
closure mapping the output gradient to parent gradients.  ``backward``
walks that record in reverse topological order and accumulates ``.grad``
on every tensor created with ``requires_grad=True``.

Tensors are at most 4-D ``(batch, channels, height, width)``; the engine
keeps whatever floating dtype its inputs use (float32 for training,
float64 for gradient checks).
"""
import numpy as np

from . import kernels
from .errors import GraphNotRecorded, ShapeMismatch


class Tensor:
    __slots__ = ("value", "grad", "requires_grad", "parents", "backward_fn", "name")

    def __init__(self, value, requires_grad=False, name=None, dtype=None):
        value = np.asarray(value, dtype=dtype)
        if value.dtype.kind != "f":
            value = value.astype(np.float64)
        if value.ndim > 4:
            raise ShapeMismatch(f"tensors have at most 4 dimensions, got {value.shape}")
        self.value = value
        self.grad = None
        self.requires_grad = requires_grad
        self.parents = ()
        self.backward_fn = None
        self.name = name

    @property
    def shape(self):
        return self.value.shape

    @property
    def dtype(self):
        return self.value.dtype

    def item(self):
        return float(self.value)

    def detach(self):
        return Tensor(self.value)

    def zero_grad(self):
        self.grad = None

    def __repr__(self):
        tag = f" {self.name}" if self.name else ""
        return f"Tensor{tag}(shape={self.shape}, dtype={self.dtype})"

    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __neg__(self):
        return mul(self, -1.0)

    def __getitem__(self, idx):
        return index(self, idx)


def _wrap(x, like=None):
    if isinstance(x, Tensor):
        return x
    dtype = like.dtype if like is not None else None
    return Tensor(np.asarray(x, dtype=dtype))


def _node(value, parents, backward_fn):
    out = Tensor(value)
    if any(p.requires_grad or p.parents for p in parents):
        out.parents = tuple(parents)
        out.backward_fn = backward_fn
    return out


def _unbroadcast(grad, shape):
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, n in enumerate(shape):
        if n == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


# ---------------------------------------------------------------------------
# elementwise


def _pair(a, b):
    like = a if isinstance(a, Tensor) else b
    return _wrap(a, like), _wrap(b, like)


def add(a, b):
    a, b = _pair(a, b)
    return _node(a.value + b.value, (a, b),
                 lambda g: (_unbroadcast(g, a.shape), _unbroadcast(g, b.shape)))


def sub(a, b):
    a, b = _pair(a, b)
    return _node(a.value - b.value, (a, b),
                 lambda g: (_unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)))


def mul(a, b):
    a, b = _pair(a, b)
    return _node(a.value * b.value, (a, b),
                 lambda g: (_unbroadcast(g * b.value, a.shape), _unbroadcast(g * a.value, b.shape)))


def square(x):
    return _node(x.value * x.value, (x,), lambda g: (2.0 * x.value * g,))


def absolute(x):
    return _node(np.abs(x.value), (x,), lambda g: (np.sign(x.value) * g,))


def _tanh_bound(dtype):
    # 1 - eps keeps v + 1 below 2 after rounding, so outputs rescaled
    # to intensities stay strictly inside (0, 255)
    return dtype.type(1) - np.finfo(dtype).eps


def tanh(x):
    """tanh clamped to the open interval (-1, 1) at the working precision."""
    bound = _tanh_bound(x.dtype)
    y = np.clip(np.tanh(x.value), -bound, bound)
    return _node(y, (x,), lambda g: ((1.0 - y * y) * g,))


def relu(x):
    """max(x, 0) with subgradient 0 at the kink."""
    mask = x.value > 0
    return _node(np.where(mask, x.value, 0).astype(x.dtype), (x,), lambda g: (g * mask,))


def leaky_relu(x, slope=0.2):
    slope = x.dtype.type(slope)
    factor = np.where(x.value > 0, x.dtype.type(1), slope)
    return _node(x.value * factor, (x,), lambda g: (g * factor,))


# ---------------------------------------------------------------------------
# reductions and indexing


def mean(x):
    n = x.value.size
    return _node(np.asarray(x.value.mean(), dtype=x.dtype), (x,),
                 lambda g: (np.full(x.shape, g / n, dtype=x.dtype),))


def total(x):
    return _node(np.asarray(x.value.sum(), dtype=x.dtype), (x,),
                 lambda g: (np.full(x.shape, g, dtype=x.dtype),))


def spatial_mean(x):
    """Average over the trailing two axes: (B, C, H, W) -> (B, C)."""
    h, w = x.shape[-2:]
    return _node(x.value.mean(axis=(-2, -1)), (x,),
                 lambda g: (np.broadcast_to(g[..., None, None] / (h * w), x.shape).astype(x.dtype),))


def index(x, idx):
    def back(g):
        out = np.zeros_like(x.value)
        np.add.at(out, idx, g)
        return (out,)

    return _node(x.value[idx], (x,), back)


def channel_norm(x):
    """Euclidean norm over the channel axis (axis 1); subgradient 0 where the norm is 0."""
    n = np.sqrt(np.sum(x.value * x.value, axis=1))

    def back(g):
        safe = np.where(n > 0, n, 1)
        return (np.where(n > 0, g / safe, 0)[:, None] * x.value,)

    return _node(n, (x,), back)


# ---------------------------------------------------------------------------
# linear maps


def channel_linear(x, weight, bias=None):
    """Per-pixel channel mixing ``y[b, o] = sum_c W[o, c] x[b, c] (+ bias[o])``.

    ``weight`` may be a constant (the calibration matrices) or a parameter
    tensor (affine layers).  Works on (B, C, H, W) and (B, C).
    """
    w = _wrap(weight, x)
    if x.shape[1] != w.shape[1]:
        raise ShapeMismatch(f"channel_linear: input has {x.shape[1]} channels, weight expects {w.shape[1]}")
    parents = [x, w]
    y = np.einsum("oc,bc...->bo...", w.value, x.value)
    if bias is not None:
        b = _wrap(bias, x)
        parents.append(b)
        y = y + b.value.reshape((-1,) + (1,) * (x.value.ndim - 2))

    def back(g):
        gx = np.einsum("oc,bo...->bc...", w.value, g)
        gw = None
        if w.requires_grad or w.parents:
            nb, no = g.shape[:2]
            gw = np.einsum("bok,bck->oc", g.reshape(nb, no, -1), x.value.reshape(nb, x.shape[1], -1))
        grads = [gx, gw]
        if bias is not None:
            grads.append(g.sum(axis=tuple(i for i in range(g.ndim) if i != 1)))
        return tuple(grads)

    return _node(y.astype(x.dtype, copy=False), parents, back)


def conv2d(x, weight, bias):
    """3x3, stride 1, zero same-padding convolution of a (B, Cin, H, W) tensor."""
    if x.value.ndim != 4:
        raise ShapeMismatch(f"conv2d expects a 4-D input, got {x.shape}")
    if x.shape[1] != weight.shape[1]:
        raise ShapeMismatch(f"conv2d: input has {x.shape[1]} channels, kernel expects {weight.shape[1]}")
    xv = np.ascontiguousarray(x.value)
    wv = np.ascontiguousarray(weight.value, dtype=x.dtype)
    bv = np.ascontiguousarray(bias.value, dtype=x.dtype)
    y = kernels.conv2d_forward(xv, wv, bv)

    def back(g):
        return kernels.conv2d_backward(xv, wv, np.ascontiguousarray(g, dtype=x.dtype))

    return _node(y, (x, weight, bias), back)


# ---------------------------------------------------------------------------


def backward(loss):
    """Accumulate d(loss)/d(leaf) into ``.grad`` of every ``requires_grad`` leaf."""
    if not isinstance(loss, Tensor):
        raise GraphNotRecorded("backward needs a Tensor")
    if loss.value.size != 1:
        raise ShapeMismatch(f"backward needs a scalar loss, got shape {loss.shape}")
    if not loss.parents and not loss.requires_grad:
        raise GraphNotRecorded("loss was not produced by a recorded computation")

    order = []
    seen = set()
    stack = [(loss, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node.parents:
            if id(p) not in seen:
                stack.append((p, False))

    grads = {id(loss): np.ones_like(loss.value)}
    for node in reversed(order):
        g = grads.pop(id(node), None)
        if g is None:
            continue
        if node.requires_grad:
            node.grad = g.copy() if node.grad is None else node.grad + g
        if node.backward_fn is None:
            continue
        for parent, pg in zip(node.parents, node.backward_fn(g)):
            if pg is None or not (parent.requires_grad or parent.parents):
                continue
            key = id(parent)
            grads[key] = pg if key not in grads else grads[key] + pg
    return loss
