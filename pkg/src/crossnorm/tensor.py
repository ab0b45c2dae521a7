"""Dense tensors with reverse-mode automatic differentiation.

Activations are stored row-major with axis order (batch, channel, height,
width). Production paths run in float32; gradient checking runs the same ops
in float64. Every operation builds a node in a dynamic graph; calling
``Tensor.backward`` walks the graph in reverse topological order and
accumulates gradients into ``Tensor.grad``.
"""

from __future__ import annotations

import numpy as np

from . import _kernels


class ShapeError(ValueError):
    """Raised when operand shapes are incompatible; names both shapes."""


class NumericalError(ArithmeticError):
    """Raised when a computation produced non-finite values."""


_FLOAT_DTYPES = (np.float32, np.float64)


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward")

    def __init__(self, data, requires_grad=False):
        arr = np.asarray(data)
        if arr.dtype not in _FLOAT_DTYPES:
            arr = arr.astype(np.float32)
        self.data = arr
        self.grad = None
        self.requires_grad = bool(requires_grad)
        self._parents = ()
        self._backward = None

    @property
    def shape(self):
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    @property
    def size(self):
        return self.data.size

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, dtype={self.data.dtype.name}, requires_grad={self.requires_grad})"

    def item(self):
        return float(self.data.reshape(-1)[0])

    def zero_grad(self):
        self.grad = None

    def detach(self):
        return Tensor(self.data)

    def astype(self, dtype):
        return Tensor(self.data.astype(dtype), requires_grad=self.requires_grad)

    def accumulate_grad(self, g):
        if self.grad is None:
            self.grad = np.array(g, dtype=self.data.dtype, copy=True)
        else:
            self.grad += g

    def require_finite(self, what="tensor"):
        if not np.all(np.isfinite(self.data)):
            raise NumericalError(f"{what} contains NaN or Inf values")
        return self

    def backward(self, grad=None):
        """Reverse-mode pass from this node; seeds with ones for scalars."""
        if grad is None:
            if self.data.size != 1:
                raise ValueError(
                    f"backward() without an upstream gradient requires a scalar, got shape {self.data.shape}"
                )
            grad = np.ones_like(self.data)
        grad = np.asarray(grad, dtype=self.data.dtype)
        if grad.shape != self.data.shape:
            raise ShapeError(
                f"upstream gradient shape {grad.shape} does not match tensor shape {self.data.shape}"
            )

        order = []
        visited = set()
        stack = [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                order.append(node)
                continue
            if id(node) in visited:
                continue
            visited.add(id(node))
            stack.append((node, True))
            for parent in node._parents:
                if id(parent) not in visited:
                    stack.append((parent, False))

        self.accumulate_grad(grad)
        for node in reversed(order):
            if node._backward is not None and node.grad is not None:
                node._backward(node.grad)


def _result(data, parents, backward):
    out = Tensor(data, requires_grad=any(p.requires_grad for p in parents))
    if out.requires_grad:
        out._parents = tuple(parents)
        out._backward = backward
    return out


def _check_same_dtype(*tensors):
    dtypes = {t.data.dtype for t in tensors}
    if len(dtypes) > 1:
        raise TypeError(f"mixed tensor dtypes are not supported: {sorted(d.name for d in dtypes)}")


def conv2d(x, weight, bias, stride=1, pad=0):
    """2-D cross-correlation with zero padding.

    x: (B,C,H,W), weight: (O,C,k,k) with odd k, bias: (O,). Output spatial
    size is floor((H + 2*pad - k) / stride) + 1.
    """
    _check_same_dtype(x, weight, bias)
    if x.data.ndim != 4 or weight.data.ndim != 4:
        raise ShapeError(
            f"conv2d expects 4-D input and weight, got {x.data.shape} and {weight.data.shape}"
        )
    B, C, H, W = x.data.shape
    O, CW, KH, KW = weight.data.shape
    if KH != KW or KH % 2 == 0:
        raise ShapeError(f"conv2d requires a square odd kernel, got {weight.data.shape}")
    if CW != C:
        raise ShapeError(
            f"conv2d channel mismatch: input {x.data.shape} has {C} channels, weight {weight.data.shape} expects {CW}"
        )
    if bias.data.shape != (O,):
        raise ShapeError(f"conv2d bias shape {bias.data.shape} does not match {O} output channels")
    if stride < 1:
        raise ValueError(f"conv2d stride must be positive, got {stride}")
    if pad < 0:
        raise ValueError(f"conv2d pad must be non-negative, got {pad}")
    if H + 2 * pad < KH or W + 2 * pad < KW:
        raise ShapeError(
            f"conv2d kernel {weight.data.shape} does not fit input {x.data.shape} with pad {pad}"
        )

    out_data = _kernels.conv2d_forward(x.data, weight.data, bias.data, stride, pad)

    def backward(g):
        if x.requires_grad:
            x.accumulate_grad(
                _kernels.conv2d_backward_input(g, weight.data, x.data.shape, stride, pad)
            )
        if weight.requires_grad:
            weight.accumulate_grad(
                _kernels.conv2d_backward_weight(x.data, g, weight.data.shape, stride, pad)
            )
        if bias.requires_grad:
            bias.accumulate_grad(g.sum(axis=(0, 2, 3)))

    return _result(out_data, (x, weight, bias), backward)


def upsample_nearest(x, factor):
    """Replicate each pixel into a factor x factor block."""
    if factor < 1:
        raise ValueError(f"upsample factor must be >= 1, got {factor}")
    if x.data.ndim != 4:
        raise ShapeError(f"upsample_nearest expects a 4-D tensor, got {x.data.shape}")
    if factor == 1:
        out_data = x.data.copy()
    else:
        out_data = np.repeat(np.repeat(x.data, factor, axis=2), factor, axis=3)

    B, C, H, W = x.data.shape

    def backward(g):
        if x.requires_grad:
            if factor == 1:
                x.accumulate_grad(g)
            else:
                x.accumulate_grad(g.reshape(B, C, H, factor, W, factor).sum(axis=(3, 5)))

    return _result(out_data, (x,), backward)


def relu(x):
    out_data = np.maximum(x.data, 0)

    def backward(g):
        if x.requires_grad:
            x.accumulate_grad(g * (x.data > 0))

    return _result(out_data, (x,), backward)


def sigmoid(x):
    d = x.data
    out_data = np.empty_like(d)
    pos = d >= 0
    out_data[pos] = 1.0 / (1.0 + np.exp(-d[pos]))
    e = np.exp(d[~pos])
    out_data[~pos] = e / (1.0 + e)

    def backward(g):
        if x.requires_grad:
            x.accumulate_grad(g * out_data * (1.0 - out_data))

    return _result(out_data, (x,), backward)


def group_norm(x, groups, gamma, beta, eps=1e-5):
    """Per-(sample, group) standardization followed by a per-channel affine."""
    _check_same_dtype(x, gamma, beta)
    if x.data.ndim != 4:
        raise ShapeError(f"group_norm expects a 4-D tensor, got {x.data.shape}")
    B, C, H, W = x.data.shape
    if groups < 1 or C % groups != 0:
        raise ShapeError(f"channel count {C} is not divisible by groups={groups}")
    if gamma.data.shape != (C,) or beta.data.shape != (C,):
        raise ShapeError(
            f"affine parameters must have shape ({C},), got {gamma.data.shape} and {beta.data.shape}"
        )
    if eps <= 0:
        raise ValueError(f"eps must be positive, got {eps}")

    xg = x.data.reshape(B, groups, -1)
    mu = xg.mean(axis=2, keepdims=True)
    var = xg.var(axis=2, keepdims=True)
    inv = 1.0 / np.sqrt(var + np.asarray(eps, dtype=x.data.dtype))
    xhat_g = (xg - mu) * inv
    xhat = xhat_g.reshape(B, C, H, W)
    out_data = gamma.data[None, :, None, None] * xhat + beta.data[None, :, None, None]

    def backward(g):
        if gamma.requires_grad:
            gamma.accumulate_grad((g * xhat).sum(axis=(0, 2, 3)))
        if beta.requires_grad:
            beta.accumulate_grad(g.sum(axis=(0, 2, 3)))
        if x.requires_grad:
            dxhat = (g * gamma.data[None, :, None, None]).reshape(B, groups, -1)
            m1 = dxhat.mean(axis=2, keepdims=True)
            m2 = (dxhat * xhat_g).mean(axis=2, keepdims=True)
            dx = inv * (dxhat - m1 - xhat_g * m2)
            x.accumulate_grad(dx.reshape(B, C, H, W))

    return _result(out_data, (x, gamma, beta), backward)


def elementwise_max(a, b):
    """Elementwise maximum; at exact ties the gradient routes entirely to b."""
    _check_same_dtype(a, b)
    if a.data.shape != b.data.shape:
        raise ShapeError(f"elementwise_max shape mismatch: {a.data.shape} vs {b.data.shape}")
    a_wins = a.data > b.data
    out_data = np.where(a_wins, a.data, b.data)

    def backward(g):
        if a.requires_grad:
            a.accumulate_grad(g * a_wins)
        if b.requires_grad:
            b.accumulate_grad(g * ~a_wins)

    return _result(out_data, (a, b), backward)


def concat_channels(a, b):
    _check_same_dtype(a, b)
    if a.data.ndim != 4 or b.data.ndim != 4:
        raise ShapeError(f"concat_channels expects 4-D tensors, got {a.data.shape} and {b.data.shape}")
    if a.data.shape[0] != b.data.shape[0] or a.data.shape[2:] != b.data.shape[2:]:
        raise ShapeError(
            f"concat_channels batch/spatial mismatch: {a.data.shape} vs {b.data.shape}"
        )
    ca = a.data.shape[1]
    out_data = np.concatenate([a.data, b.data], axis=1)

    def backward(g):
        if a.requires_grad:
            a.accumulate_grad(g[:, :ca])
        if b.requires_grad:
            b.accumulate_grad(g[:, ca:])

    return _result(out_data, (a, b), backward)


def slice_channels(x, start, count):
    if x.data.ndim != 4:
        raise ShapeError(f"slice_channels expects a 4-D tensor, got {x.data.shape}")
    C = x.data.shape[1]
    if start < 0 or count < 0 or start + count > C:
        raise ShapeError(
            f"slice_channels range [{start}, {start + count}) is out of bounds for {C} channels"
        )
    out_data = x.data[:, start:start + count].copy()

    def backward(g):
        if x.requires_grad:
            full = np.zeros_like(x.data)
            full[:, start:start + count] = g
            x.accumulate_grad(full)

    return _result(out_data, (x,), backward)


def add(a, b):
    _check_same_dtype(a, b)
    if a.data.shape != b.data.shape:
        raise ShapeError(f"add shape mismatch: {a.data.shape} vs {b.data.shape}")
    out_data = a.data + b.data

    def backward(g):
        if a.requires_grad:
            a.accumulate_grad(g)
        if b.requires_grad:
            b.accumulate_grad(g)

    return _result(out_data, (a, b), backward)


def mul(a, b):
    _check_same_dtype(a, b)
    if a.data.shape != b.data.shape:
        raise ShapeError(f"mul shape mismatch: {a.data.shape} vs {b.data.shape}")
    out_data = a.data * b.data

    def backward(g):
        if a.requires_grad:
            a.accumulate_grad(g * b.data)
        if b.requires_grad:
            b.accumulate_grad(g * a.data)

    return _result(out_data, (a, b), backward)


def sum_all(x):
    """Sum every element into a 0-D scalar tensor."""
    out_data = np.asarray(x.data.sum(), dtype=x.data.dtype)

    def backward(g):
        if x.requires_grad:
            x.accumulate_grad(np.broadcast_to(g, x.data.shape))

    return _result(out_data, (x,), backward)
