"""Dense tensors with define-by-run reverse-mode differentiation.

Every op returns a new :class:`Tensor` that remembers its parents and a
closure mapping the output gradient to parent gradients.  The graph is
rebuilt on each forward pass and walked once in reverse topological order by
:func:`backward` / :func:`grad`.
"""

from __future__ import annotations

import contextlib
import threading
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from numpy.lib.stride_tricks import as_strided

from .errors import ContractError, DegenerateBatchError, DimensionError, ParameterError

__all__ = [
    "Tensor", "ComputeGraph", "RunningStats",
    "no_grad", "is_grad_enabled", "default_dtype", "get_default_dtype", "set_default_dtype",
    "tensor", "add", "sub", "mul", "div", "neg", "power", "matmul", "sum", "mean",
    "reshape", "transpose", "concat", "absolute", "sqrt", "exp",
    "relu", "leaky_relu", "tanh", "activation",
    "dense", "conv1d", "conv_transpose1d", "batch_norm",
    "build_graph", "backward", "grad", "finite_difference_check",
]

_local = threading.local()
_default_dtype = np.dtype(np.float32)


def is_grad_enabled() -> bool:
    return getattr(_local, "grad_enabled", True)


@contextlib.contextmanager
def no_grad():
    """Run forward ops without recording a graph (thread-local)."""
    prev = is_grad_enabled()
    _local.grad_enabled = False
    try:
        yield
    finally:
        _local.grad_enabled = prev


def get_default_dtype() -> np.dtype:
    return _default_dtype


def set_default_dtype(dtype) -> None:
    global _default_dtype
    _default_dtype = np.dtype(dtype)


@contextlib.contextmanager
def default_dtype(dtype):
    prev = get_default_dtype()
    set_default_dtype(dtype)
    try:
        yield
    finally:
        set_default_dtype(prev)


class Tensor:
    """N-dimensional float array participating in a differentiation graph."""

    __slots__ = ("data", "grad", "requires_grad", "op", "_parents", "_backward")
    __array_priority__ = 100

    def __init__(self, data, requires_grad: bool = False, dtype=None):
        if isinstance(data, Tensor):
            data = data.data
        if dtype is None:
            if isinstance(data, np.ndarray) and data.dtype.kind == "f":
                dtype = data.dtype
            else:
                dtype = get_default_dtype()
        self.data = np.asarray(data, dtype=dtype)
        self.grad: np.ndarray | None = None
        self.requires_grad = bool(requires_grad)
        self.op = "leaf"
        self._parents: tuple[Tensor, ...] = ()
        self._backward = None

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    @property
    def dtype(self):
        return self.data.dtype

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data.reshape(-1)[0]) if self.data.size == 1 else float(self.data)

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def zero_grad(self) -> None:
        self.grad = None

    def __repr__(self):
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}, op={self.op}{flag})"

    def __len__(self):
        return self.data.shape[0]

    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(other, self)

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(other, self)

    def __truediv__(self, other):
        return div(self, other)

    def __rtruediv__(self, other):
        return div(other, self)

    def __neg__(self):
        return neg(self)

    def __pow__(self, p):
        return power(self, p)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, idx):
        return _getitem(self, idx)

    def sum(self, axis=None, keepdims=False):
        return sum(self, axis, keepdims)

    def mean(self, axis=None, keepdims=False):
        return mean(self, axis, keepdims)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)

    def transpose(self, *axes):
        if len(axes) == 1 and isinstance(axes[0], (tuple, list)):
            axes = tuple(axes[0])
        return transpose(self, axes or None)

    def backward(self, grad_output=None):
        backward(self, grad_output)


def tensor(data, requires_grad=False, dtype=None) -> Tensor:
    return Tensor(data, requires_grad=requires_grad, dtype=dtype)


def _as_tensor(x, like: Tensor | None = None) -> Tensor:
    if isinstance(x, Tensor):
        return x
    dtype = like.dtype if like is not None else None
    return Tensor(np.asarray(x, dtype=dtype or get_default_dtype()))


def _make(data, parents: tuple, backward_fn, op: str) -> Tensor:
    out = Tensor.__new__(Tensor)
    out.data = data
    out.grad = None
    out.op = op
    if is_grad_enabled() and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = parents
        out._backward = backward_fn
    else:
        out.requires_grad = False
        out._parents = ()
        out._backward = None
    return out


def _unbroadcast(g: np.ndarray, shape: tuple) -> np.ndarray:
    if g.shape == shape:
        return g
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g.reshape(shape)


# ---------------------------------------------------------------- elementwise


def add(a, b) -> Tensor:
    a = _as_tensor(a, b if isinstance(b, Tensor) else None)
    b = _as_tensor(b, a)

    def bw(g):
        return _unbroadcast(g, a.shape), _unbroadcast(g, b.shape)

    return _make(a.data + b.data, (a, b), bw, "add")


def sub(a, b) -> Tensor:
    a = _as_tensor(a, b if isinstance(b, Tensor) else None)
    b = _as_tensor(b, a)

    def bw(g):
        return _unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)

    return _make(a.data - b.data, (a, b), bw, "sub")


def mul(a, b) -> Tensor:
    a = _as_tensor(a, b if isinstance(b, Tensor) else None)
    b = _as_tensor(b, a)

    def bw(g):
        ga = _unbroadcast(g * b.data, a.shape) if a.requires_grad else None
        gb = _unbroadcast(g * a.data, b.shape) if b.requires_grad else None
        return ga, gb

    return _make(a.data * b.data, (a, b), bw, "mul")


def div(a, b) -> Tensor:
    a = _as_tensor(a, b if isinstance(b, Tensor) else None)
    b = _as_tensor(b, a)
    out = a.data / b.data

    def bw(g):
        ga = _unbroadcast(g / b.data, a.shape) if a.requires_grad else None
        gb = _unbroadcast(-g * out / b.data, b.shape) if b.requires_grad else None
        return ga, gb

    return _make(out, (a, b), bw, "div")


def neg(a: Tensor) -> Tensor:
    return _make(-a.data, (a,), lambda g: (-g,), "neg")


def power(a: Tensor, p: float) -> Tensor:
    p = float(p)

    def bw(g):
        return (g * p * a.data ** (p - 1.0),)

    return _make(a.data ** p, (a,), bw, "pow")


def absolute(a: Tensor) -> Tensor:
    return _make(np.abs(a.data), (a,), lambda g: (g * np.sign(a.data),), "abs")


def sqrt(a: Tensor) -> Tensor:
    out = np.sqrt(a.data)

    def bw(g):
        # subgradient 0 at the origin keeps zero-norm penalties finite
        safe = np.where(out > 0, out, 1.0)
        return (np.where(out > 0, g / (2.0 * safe), 0.0).astype(out.dtype),)

    return _make(out, (a,), bw, "sqrt")


def exp(a: Tensor) -> Tensor:
    out = np.exp(a.data)
    return _make(out, (a,), lambda g: (g * out,), "exp")


def relu(a: Tensor) -> Tensor:
    mask = a.data > 0
    return _make(a.data * mask, (a,), lambda g: (g * mask,), "relu")


def leaky_relu(a: Tensor, slope: float = 0.2) -> Tensor:
    scale = np.where(a.data > 0, 1.0, slope).astype(a.dtype)
    return _make(a.data * scale, (a,), lambda g: (g * scale,), "leaky_relu")


def tanh(a: Tensor) -> Tensor:
    out = np.tanh(a.data)
    return _make(out, (a,), lambda g: (g * (1.0 - out * out),), "tanh")


def activation(kind: str, x: Tensor, slope: float = 0.2) -> Tensor:
    if kind == "relu":
        return relu(x)
    if kind == "leaky_relu":
        return leaky_relu(x, slope)
    if kind == "tanh":
        return tanh(x)
    raise ParameterError(f"unknown activation {kind!r}")


# ---------------------------------------------------------------- reductions / shape


def _expand_reduced(g, shape, axis, keepdims):
    if axis is None:
        return np.broadcast_to(g, shape)
    if not keepdims:
        axes = (axis,) if isinstance(axis, int) else tuple(axis)
        axes = tuple(ax % len(shape) for ax in axes)
        g = np.expand_dims(g, axes)
    return np.broadcast_to(g, shape)


def sum(a: Tensor, axis=None, keepdims=False) -> Tensor:  # noqa: A001
    out = np.asarray(a.data.sum(axis=axis, keepdims=keepdims, dtype=np.float64), dtype=a.dtype)
    return _make(out, (a,), lambda g: (_expand_reduced(g, a.shape, axis, keepdims),), "sum")


def mean(a: Tensor, axis=None, keepdims=False) -> Tensor:
    if axis is None:
        n = a.size
    else:
        axes = (axis,) if isinstance(axis, int) else tuple(axis)
        n = int(np.prod([a.shape[ax] for ax in axes]))
    out = np.asarray(a.data.sum(axis=axis, keepdims=keepdims, dtype=np.float64) / n, dtype=a.dtype)
    return _make(out, (a,), lambda g: (_expand_reduced(g / n, a.shape, axis, keepdims),), "mean")


def reshape(a: Tensor, shape) -> Tensor:
    return _make(a.data.reshape(shape), (a,), lambda g: (g.reshape(a.shape),), "reshape")


def transpose(a: Tensor, axes=None) -> Tensor:
    if axes is None:
        axes = tuple(reversed(range(a.ndim)))
    inv = tuple(np.argsort(axes))
    return _make(a.data.transpose(axes), (a,), lambda g: (g.transpose(inv),), "transpose")


def _getitem(a: Tensor, idx) -> Tensor:
    def bw(g):
        full = np.zeros_like(a.data)
        np.add.at(full, idx, g)
        return (full,)

    return _make(a.data[idx], (a,), bw, "getitem")


def concat(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    tensors = tuple(tensors)
    sizes = [t.shape[axis] for t in tensors]
    splits = np.cumsum(sizes)[:-1]

    def bw(g):
        return tuple(np.split(g, splits, axis=axis))

    return _make(np.concatenate([t.data for t in tensors], axis=axis), tensors, bw, "concat")


def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise DimensionError(f"cannot multiply shapes {a.shape} and {b.shape}")

    def bw(g):
        ga = g @ b.data.T if a.requires_grad else None
        gb = a.data.T @ g if b.requires_grad else None
        return ga, gb

    return _make(a.data @ b.data, (a, b), bw, "matmul")


# ---------------------------------------------------------------- layers


def dense(x: Tensor, W: Tensor, b: Tensor | None = None) -> Tensor:
    """Affine map ``x @ W + b`` over a batch of row vectors."""
    if x.ndim != 2 or W.ndim != 2 or x.shape[1] != W.shape[0]:
        raise DimensionError(f"dense: input shape {x.shape} incompatible with weight shape {W.shape}")
    if b is not None and b.shape != (W.shape[1],):
        raise DimensionError(f"dense: bias shape {b.shape} incompatible with weight shape {W.shape}")
    out = x.data @ W.data
    if b is not None:
        out = out + b.data
        parents = (x, W, b)
    else:
        parents = (x, W)

    def bw(g):
        gx = g @ W.data.T if x.requires_grad else None
        gW = x.data.T @ g if W.requires_grad else None
        if b is None:
            return gx, gW
        return gx, gW, g.sum(axis=0, dtype=np.float64).astype(g.dtype)

    return _make(out, parents, bw, "dense")


def _conv_out_len(L, K, stride, padding):
    return (L + 2 * padding - K) // stride + 1


def _pad(x: np.ndarray, padding: int) -> np.ndarray:
    if not padding:
        return np.ascontiguousarray(x)
    B, C, L = x.shape
    xp = np.zeros((B, C, L + 2 * padding), dtype=x.dtype)
    xp[:, :, padding:padding + L] = x
    return xp


def _im2col(x: np.ndarray, K: int, stride: int, padding: int, L_out: int) -> np.ndarray:
    """Sliding windows of the padded input as a ``[B * L_out, C * K]`` matrix."""
    xp = _pad(x, padding)
    B, C, _ = xp.shape
    sB, sC, sL = xp.strides
    cols = as_strided(xp, shape=(B, L_out, C, K), strides=(sB, stride * sL, sC, sL), writeable=False)
    return cols.reshape(B * L_out, C * K)


def _conv1d_np(x, k, stride, padding, cols=None):
    B = x.shape[0]
    O, C, K = k.shape
    L_out = _conv_out_len(x.shape[2], K, stride, padding)
    if cols is None:
        cols = _im2col(x, K, stride, padding, L_out)
    out = cols @ k.reshape(O, C * K).T
    return out.reshape(B, L_out, O).transpose(0, 2, 1)


def _conv1d_input_grad(g, k, stride, padding, L):
    """Adjoint of conv1d w.r.t. its input (equivalently, a transposed convolution)."""
    B, O, L_out = g.shape
    _, C, K = k.shape
    g2 = g.transpose(0, 2, 1).reshape(B * L_out, O)
    dcols = (g2 @ k.reshape(O, C * K)).reshape(B, L_out, C, K).transpose(0, 2, 1, 3)
    dxp = np.zeros((B, C, L + 2 * padding), dtype=np.result_type(g, k))
    span = stride * (L_out - 1) + 1
    for kk in range(K):
        dxp[:, :, kk:kk + span:stride] += dcols[..., kk]
    return dxp[:, :, padding:padding + L]


def _conv1d_weight_grad(x, g, K, stride, padding, cols=None):
    B, O, L_out = g.shape
    C = x.shape[1]
    if cols is None:
        cols = _im2col(x, K, stride, padding, L_out)
    g2 = g.transpose(0, 2, 1).reshape(B * L_out, O)
    return (g2.T @ cols).reshape(O, C, K)


def conv1d(x: Tensor, k: Tensor, stride: int = 1, padding: int = 0) -> Tensor:
    """Cross-correlation of ``x[B, C_in, L]`` with ``k[C_out, C_in, K]`` (no kernel flip)."""
    if stride < 1 or padding < 0:
        raise ParameterError(f"conv1d: stride must be >= 1 and padding >= 0 (got {stride}, {padding})")
    if x.ndim != 3 or k.ndim != 3 or x.shape[1] != k.shape[1]:
        raise DimensionError(f"conv1d: input shape {x.shape} incompatible with kernel shape {k.shape}")
    L, K = x.shape[2], k.shape[2]
    if K > L + 2 * padding:
        raise DimensionError(f"conv1d: kernel length {K} exceeds padded input length {L + 2 * padding}")
    cols = _im2col(x.data, K, stride, padding, _conv_out_len(L, K, stride, padding))
    out = _conv1d_np(x.data, k.data, stride, padding, cols)

    def bw(g):
        gx = _conv1d_input_grad(g, k.data, stride, padding, L) if x.requires_grad else None
        gk = _conv1d_weight_grad(x.data, g, K, stride, padding, cols) if k.requires_grad else None
        return gx, gk

    return _make(out, (x, k), bw, "conv1d")


def conv_transpose1d(x: Tensor, k: Tensor, stride: int = 1, padding: int = 0) -> Tensor:
    """Transposed convolution of ``x[B, C_in, L]`` with ``k[C_in, C_out, K]``.

    Output length is ``(L - 1) * stride + K - 2 * padding``; the op is the exact
    adjoint of :func:`conv1d` with the same kernel, stride and padding.
    """
    if stride < 1 or padding < 0:
        raise ParameterError(f"conv_transpose1d: stride must be >= 1 and padding >= 0 (got {stride}, {padding})")
    if x.ndim != 3 or k.ndim != 3 or x.shape[1] != k.shape[0]:
        raise DimensionError(f"conv_transpose1d: input shape {x.shape} incompatible with kernel shape {k.shape}")
    L, K = x.shape[2], k.shape[2]
    L_out = (L - 1) * stride + K - 2 * padding
    if L_out <= 0:
        raise DimensionError(f"conv_transpose1d: output length {L_out} is not positive")
    out = _conv1d_input_grad(x.data, k.data, stride, padding, L_out)

    def bw(g):
        gx = _conv1d_np(g, k.data, stride, padding) if x.requires_grad else None
        gk = _conv1d_weight_grad(g, x.data, K, stride, padding) if k.requires_grad else None
        return gx, gk

    return _make(out, (x, k), bw, "conv_transpose1d")


@dataclass
class RunningStats:
    mean: np.ndarray
    var: np.ndarray

    @classmethod
    def fresh(cls, channels: int, dtype=None) -> "RunningStats":
        dtype = dtype or get_default_dtype()
        return cls(np.zeros(channels, dtype=dtype), np.ones(channels, dtype=dtype))


def batch_norm(
    x: Tensor,
    gamma: Tensor,
    beta: Tensor,
    eps: float = 1e-5,
    mode: str = "train",
    running_stats: RunningStats | None = None,
    momentum: float = 0.1,
    update_stats: bool = True,
) -> Tensor:
    """Per-channel normalization of ``x[B, C, L]`` over the batch and length axes."""
    if x.ndim != 3 or gamma.shape != (x.shape[1],) or beta.shape != (x.shape[1],):
        raise DimensionError(f"batch_norm: input {x.shape} with gamma {gamma.shape} / beta {beta.shape}")
    g3 = gamma.data[None, :, None]
    if mode == "train":
        n = x.shape[0] * x.shape[2]
        if n < 2:
            raise DegenerateBatchError(f"batch_norm needs at least 2 values per channel in train mode, got {n}")
        mu = x.data.mean(axis=(0, 2), dtype=np.float64)
        centered = x.data - mu[None, :, None].astype(x.dtype)
        var = np.mean(np.square(centered, dtype=np.float64), axis=(0, 2))
        inv_std = (1.0 / np.sqrt(var + eps)).astype(x.dtype)
        xhat = centered * inv_std[None, :, None]
        if running_stats is not None and update_stats:
            running_stats.mean[...] = (1 - momentum) * running_stats.mean + momentum * mu
            running_stats.var[...] = (1 - momentum) * running_stats.var + momentum * var * n / (n - 1)

        def bw(g):
            gg = g.sum(axis=(0, 2), dtype=np.float64)
            gxh = (g * xhat).sum(axis=(0, 2), dtype=np.float64)
            gx = None
            if x.requires_grad:
                dxhat = g * g3
                s1 = (gg * gamma.data)[None, :, None] / n
                s2 = (gxh * gamma.data)[None, :, None] / n
                gx = (inv_std[None, :, None] * (dxhat - s1 - xhat * s2)).astype(x.dtype)
            return gx, gxh.astype(gamma.dtype), gg.astype(beta.dtype)

    elif mode == "eval":
        if running_stats is None:
            raise ContractError("batch_norm in eval mode requires running statistics")
        inv_std = (1.0 / np.sqrt(running_stats.var.astype(np.float64) + eps)).astype(x.dtype)
        xhat = (x.data - running_stats.mean[None, :, None].astype(x.dtype)) * inv_std[None, :, None]

        def bw(g):
            gx = g * (g3 * inv_std[None, :, None]) if x.requires_grad else None
            return (
                gx,
                (g * xhat).sum(axis=(0, 2), dtype=np.float64).astype(gamma.dtype),
                g.sum(axis=(0, 2), dtype=np.float64).astype(beta.dtype),
            )

    else:
        raise ParameterError(f"batch_norm mode must be 'train' or 'eval', got {mode!r}")
    out = xhat * g3 + beta.data[None, :, None]
    return _make(out, (x, gamma, beta), bw, "batch_norm")


# ---------------------------------------------------------------- backward


@dataclass
class ComputeGraph:
    """Differentiable nodes reachable from ``output``, in topological order."""

    nodes: list = field(default_factory=list)
    output: Tensor | None = None

    @property
    def leaves(self) -> list:
        return [n for n in self.nodes if not n._parents]


def build_graph(output: Tensor) -> ComputeGraph:
    order: list[Tensor] = []
    seen: set[int] = set()
    if output.requires_grad:
        stack = [(output, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                order.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                if p.requires_grad and id(p) not in seen:
                    stack.append((p, False))
    return ComputeGraph(order, output)


def _propagate(output: Tensor, seed: np.ndarray) -> tuple[ComputeGraph, dict[int, np.ndarray]]:
    graph = build_graph(output)
    grads: dict[int, np.ndarray] = {id(output): seed}
    for node in reversed(graph.nodes):
        g = grads.get(id(node))
        if g is None or node._backward is None:
            continue
        parent_grads = node._backward(g)
        for p, pg in zip(node._parents, parent_grads):
            if pg is None or not p.requires_grad:
                continue
            key = id(p)
            if key in grads:
                grads[key] = grads[key] + pg
            else:
                grads[key] = pg
    return graph, grads


def _seed(output: Tensor, grad_output) -> np.ndarray:
    if grad_output is None:
        if output.size != 1:
            raise ContractError(f"backward needs a scalar output, got shape {output.shape}")
        return np.ones_like(output.data)
    g = np.asarray(grad_output, dtype=output.dtype)
    if g.shape != output.shape:
        raise DimensionError(f"grad_output shape {g.shape} does not match output shape {output.shape}")
    return g


def backward(output: Tensor, grad_output=None) -> None:
    """Accumulate d(output)/d(leaf) into ``.grad`` of every requires_grad leaf."""
    if not output.requires_grad:
        raise ContractError("output does not depend on any tensor that requires grad")
    graph, grads = _propagate(output, _seed(output, grad_output))
    for leaf in graph.leaves:
        g = grads.get(id(leaf))
        if g is None:
            continue
        g = np.array(g, dtype=leaf.dtype)
        leaf.grad = g if leaf.grad is None else leaf.grad + g


def grad(output: Tensor, inputs: Sequence[Tensor], grad_output=None) -> list[np.ndarray]:
    """Gradients of ``output`` w.r.t. ``inputs`` without touching any ``.grad`` field."""
    if not output.requires_grad:
        return [np.zeros_like(t.data) for t in inputs]
    _, grads = _propagate(output, _seed(output, grad_output))
    out = []
    for t in inputs:
        g = grads.get(id(t))
        out.append(np.zeros_like(t.data) if g is None else np.array(g, dtype=t.dtype))
    return out


def finite_difference_check(
    f: Callable[[Tensor], Tensor],
    x,
    eps: float = 1e-3,
    n_points: int | None = None,
    rng: np.random.Generator | None = None,
) -> float:
    """Max relative error between analytic and central-difference gradients.

    The error at each checked coordinate is
    ``|analytic - numeric| / max(1, |analytic|)``.  All coordinates are
    checked unless ``n_points`` is given, in which case a random subset is.
    """
    if eps <= 0:
        raise ParameterError("eps must be positive")
    base = np.array(x.data if isinstance(x, Tensor) else x, dtype=None)
    if base.dtype.kind != "f":
        base = base.astype(get_default_dtype())
    xt = Tensor(base.copy(), requires_grad=True)
    out = f(xt)
    if out.size != 1:
        raise ContractError(f"finite_difference_check needs a scalar function, got shape {out.shape}")
    (analytic,) = grad(out, [xt])
    flat = analytic.reshape(-1)
    idx = np.arange(base.size)
    if n_points is not None and n_points < base.size:
        rng = rng or np.random.default_rng(0)
        idx = rng.choice(base.size, size=n_points, replace=False)
    worst = 0.0
    with no_grad():
        for i in idx:
            xp = base.copy().reshape(-1)
            xm = base.copy().reshape(-1)
            xp[i] += eps
            xm[i] -= eps
            fp = float(f(Tensor(xp.reshape(base.shape))).data.reshape(-1)[0])
            fm = float(f(Tensor(xm.reshape(base.shape))).data.reshape(-1)[0])
            numeric = (fp - fm) / (2.0 * eps)
            a = float(flat[i])
            worst = max(worst, abs(a - numeric) / max(1.0, abs(a)))
    return worst
