"""Tape-based reverse-mode differentiation over dense 2-D arrays.

A :class:`Graph` owns an ordered list of nodes. Every op appends one node whose
inputs are earlier nodes, so the tape is topologically ordered by construction
and ``backward`` is a single reverse sweep.
"""

from __future__ import annotations

from typing import Callable, Sequence

import numpy as np


class ShapeError(ValueError):
    pass


class NonFiniteError(FloatingPointError):
    pass


class StaleGraphError(RuntimeError):
    pass


BackwardFn = Callable[[np.ndarray], Sequence["np.ndarray | None"]]


class Tensor:
    __slots__ = ("graph", "id", "data")

    def __init__(self, graph: Graph, node_id: int, data: np.ndarray):
        self.graph = graph
        self.id = node_id
        self.data = data

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    def numpy(self) -> np.ndarray:
        return self.data

    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(self, other)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(self, other)

    def __matmul__(self, other):
        return matmul(self, other)

    def __repr__(self):
        return f"Tensor(id={self.id}, shape={self.shape}, dtype={self.data.dtype})"


class Graph:
    """Records ops for one forward pass; ``backward`` may be called once."""

    def __init__(self, dtype=np.float32):
        self.dtype = np.dtype(dtype)
        self._inputs: list[tuple[int, ...]] = []
        self._backward: list[BackwardFn | None] = []
        self._needs_grad: list[bool] = []
        self._params: dict[str, Tensor] = {}
        self._consumed = False

    def __len__(self):
        return len(self._inputs)

    def _check_live(self):
        if self._consumed:
            raise StaleGraphError("graph already differentiated; re-run the forward pass")

    def _new(self, data, inputs=(), backward=None, needs_grad=False) -> Tensor:
        self._check_live()
        self._inputs.append(tuple(inputs))
        self._backward.append(backward)
        self._needs_grad.append(needs_grad)
        return Tensor(self, len(self._inputs) - 1, data)

    def param(self, name: str, value: np.ndarray) -> Tensor:
        if name in self._params:
            raise KeyError(f"parameter {name!r} registered twice")
        t = self._new(np.array(value, dtype=self.dtype), needs_grad=True)
        self._params[name] = t
        return t

    def constant(self, value) -> Tensor:
        return self._new(np.asarray(value, dtype=self.dtype))

    def record(self, op: str, out: np.ndarray, inputs: Sequence[Tensor], backward: BackwardFn) -> Tensor:
        """Append an op node. ``backward`` maps the output gradient to one gradient per input."""
        for t in inputs:
            if t.graph is not self:
                raise ValueError(f"{op}: input belongs to another graph")
        out = np.asarray(out, dtype=self.dtype)
        if not np.isfinite(out).all():
            raise NonFiniteError(f"{op} produced a non-finite value")
        needs = any(self._needs_grad[t.id] for t in inputs)
        return self._new(out, [t.id for t in inputs], backward if needs else None, needs)

    @property
    def parameter_names(self) -> list[str]:
        return list(self._params)

    def backward(self, loss: Tensor) -> dict[str, np.ndarray]:
        self._check_live()
        if loss.graph is not self:
            raise ValueError("loss belongs to another graph")
        if loss.data.size != 1:
            raise ShapeError(f"loss must be scalar, got shape {loss.shape}")
        self._consumed = True
        grads: list[np.ndarray | None] = [None] * len(self._inputs)
        grads[loss.id] = np.ones_like(loss.data)
        for node in range(loss.id, -1, -1):
            g = grads[node]
            fn = self._backward[node]
            if g is None or fn is None:
                continue
            for src, gi in zip(self._inputs[node], fn(g)):
                if gi is None or not self._needs_grad[src]:
                    continue
                grads[src] = gi if grads[src] is None else grads[src] + gi
        out = {}
        for name, t in self._params.items():
            # parameters the loss never reached still get a zero gradient slot
            g = grads[t.id]
            out[name] = np.zeros_like(t.data) if g is None else g.astype(self.dtype, copy=False)
        return out


def _as_tensor(graph: Graph, x) -> Tensor:
    return x if isinstance(x, Tensor) else graph.constant(x)


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    if g.shape == shape:
        return g
    dtype = g.dtype
    lead = g.ndim - len(shape)
    if lead:
        g = g.sum(axis=tuple(range(lead)), dtype=np.float64)
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True, dtype=np.float64)
    return g.reshape(shape).astype(dtype)


def _binary_graph(a, b) -> Graph:
    for x in (a, b):
        if isinstance(x, Tensor):
            return x.graph
    raise TypeError("at least one operand must be a Tensor")


def add(a, b) -> Tensor:
    graph = _binary_graph(a, b)
    a, b = _as_tensor(graph, a), _as_tensor(graph, b)
    try:
        out = a.data + b.data
    except ValueError as exc:
        raise ShapeError(f"add: {a.shape} vs {b.shape}") from exc
    sa, sb = a.shape, b.shape
    return graph.record("add", out, (a, b), lambda g: (_unbroadcast(g, sa), _unbroadcast(g, sb)))


def mul(a, b) -> Tensor:
    graph = _binary_graph(a, b)
    a, b = _as_tensor(graph, a), _as_tensor(graph, b)
    try:
        out = a.data * b.data
    except ValueError as exc:
        raise ShapeError(f"mul: {a.shape} vs {b.shape}") from exc
    ad, bd = a.data, b.data
    return graph.record("mul", out, (a, b), lambda g: (_unbroadcast(g * bd, ad.shape), _unbroadcast(g * ad, bd.shape)))


def matmul(a: Tensor, b) -> Tensor:
    b = _as_tensor(a.graph, b)
    if a.data.ndim != 2 or b.data.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul: {a.shape} @ {b.shape}")
    ad, bd = a.data, b.data
    return a.graph.record("matmul", ad @ bd, (a, b), lambda g: (g @ bd.T, ad.T @ g))


def _conv_pads(width: int, dilation: int, causal: bool) -> tuple[int, int]:
    total = (width - 1) * dilation
    if causal:
        return total, 0
    return total // 2, total - total // 2


def conv1d(x: Tensor, kernel: Tensor, dilation: int = 1, causal: bool = True) -> Tensor:
    """Dilated temporal convolution over frames.

    ``x`` is ``(L, C_in)``, ``kernel`` is ``(K, C_in, C_out)``. Causal mode left-pads
    ``(K - 1) * dilation`` zeros so frame ``t`` only sees frames ``<= t``; acausal
    mode centres the receptive field.
    """
    if dilation < 1:
        raise ShapeError("dilation must be >= 1")
    if x.data.ndim != 2 or kernel.data.ndim != 3 or kernel.shape[1] != x.shape[1]:
        raise ShapeError(f"conv1d: input {x.shape}, kernel {kernel.shape}")
    width, c_in, c_out = kernel.shape
    length = x.shape[0]
    left, right = _conv_pads(width, dilation, causal)
    xp = np.pad(x.data, ((left, right), (0, 0)))
    cols = np.concatenate([xp[k * dilation:k * dilation + length] for k in range(width)], axis=1)
    w2 = kernel.data.reshape(width * c_in, c_out)
    out = cols @ w2

    def backward(g):
        gcols = g @ w2.T
        gxp = np.zeros_like(xp)
        for k in range(width):
            gxp[k * dilation:k * dilation + length] += gcols[:, k * c_in:(k + 1) * c_in]
        gx = gxp[left:left + length]
        gw = (cols.T @ g).reshape(width, c_in, c_out)
        return gx, gw

    return x.graph.record("conv1d", out, (x, kernel), backward)


def causal_dilated_conv1d(x: Tensor, kernel: Tensor, dilation: int = 1) -> Tensor:
    return conv1d(x, kernel, dilation, causal=True)


def _sigmoid(x: np.ndarray) -> np.ndarray:
    z = np.exp(-np.abs(x))
    return np.where(x >= 0, 1.0 / (1.0 + z), z / (1.0 + z))


def sigmoid(x: Tensor) -> Tensor:
    s = _sigmoid(x.data).astype(x.graph.dtype)
    return x.graph.record("sigmoid", s, (x,), lambda g: (g * s * (1 - s),))


def relu(x: Tensor) -> Tensor:
    mask = x.data > 0
    return x.graph.record("relu", x.data * mask, (x,), lambda g: (g * mask,))


def channel_norm(x: Tensor, groups: int = 1, eps: float = 1e-5) -> Tensor:
    """Normalise each frame over channel groups (per-frame statistics keep causality)."""
    length, channels = x.shape
    if channels % groups:
        raise ShapeError(f"{channels} channels not divisible into {groups} groups")
    xg = x.data.reshape(length, groups, channels // groups).astype(np.float64)
    mu = xg.mean(axis=2, keepdims=True)
    xc = xg - mu
    inv = 1.0 / np.sqrt((xc * xc).mean(axis=2, keepdims=True) + eps)
    xhat = xc * inv
    dtype = x.graph.dtype

    def backward(g):
        gg = g.reshape(xhat.shape).astype(np.float64)
        gx = inv * (gg - gg.mean(axis=2, keepdims=True) - xhat * (gg * xhat).mean(axis=2, keepdims=True))
        return (gx.reshape(length, channels).astype(dtype),)

    return x.graph.record("channel_norm", xhat.reshape(length, channels), (x,), backward)


def concat_channels(parts: Sequence[Tensor]) -> Tensor:
    if not parts:
        raise ShapeError("concat of zero tensors")
    graph = parts[0].graph
    lengths = {p.shape[0] for p in parts}
    if len(lengths) != 1 or any(p.data.ndim != 2 for p in parts):
        raise ShapeError(f"concat_channels: shapes {[p.shape for p in parts]}")
    bounds = np.cumsum([0] + [p.shape[1] for p in parts])
    out = np.concatenate([p.data for p in parts], axis=1)
    return graph.record(
        "concat", out, parts, lambda g: [g[:, bounds[i]:bounds[i + 1]] for i in range(len(parts))]
    )


def slice_channels(x: Tensor, start: int, stop: int) -> Tensor:
    if not 0 <= start < stop <= x.shape[1]:
        raise ShapeError(f"slice [{start}:{stop}] of width {x.shape[1]}")
    shape = x.shape

    def backward(g):
        gx = np.zeros(shape, dtype=g.dtype)
        gx[:, start:stop] = g
        return (gx,)

    return x.graph.record("slice", x.data[:, start:stop], (x,), backward)


def total(x: Tensor) -> Tensor:
    shape = x.shape
    out = np.array(x.data.sum(dtype=np.float64))
    return x.graph.record("sum", out, (x,), lambda g: (np.broadcast_to(g, shape).astype(g.dtype),))


def mean(x: Tensor) -> Tensor:
    n = x.data.size
    return mul(total(x), 1.0 / n)
