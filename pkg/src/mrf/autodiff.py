"""Reverse-mode automatic differentiation on float64 numpy arrays.

A Tensor wraps an ndarray and records the op that produced it; backward()
topologically sorts the tape and accumulates gradients into every reachable
tensor created with requires_grad=True. All values are float64 so analytic
gradients can be checked against central finite differences tightly.
"""

from __future__ import annotations

import numpy as np


class StaleGraphError(RuntimeError):
    """backward() was called twice on the same graph without a re-forward."""


class ShapeError(ValueError):
    """Operand shapes are incompatible for the requested op."""


def _as_f64(x) -> np.ndarray:
    a = np.asarray(x, dtype=np.float64)
    return a


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "name", "_parents", "_backward", "_spent")

    def __init__(self, data, requires_grad: bool = False, name: str | None = None):
        self.data = _as_f64(data)
        self.grad = None
        self.requires_grad = requires_grad
        self.name = name
        self._parents = ()
        self._backward = None
        self._spent = False

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def size(self):
        return self.data.size

    def item(self) -> float:
        return float(self.data)

    def zero_grad(self):
        self.grad = None

    def detach(self) -> "Tensor":
        return Tensor(self.data.copy())

    def __repr__(self):
        tag = f" name={self.name}" if self.name else ""
        return f"Tensor(shape={self.data.shape}{tag}, grad={'set' if self.grad is not None else 'none'})"

    # -- graph construction ------------------------------------------------

    def _needs_tape(self) -> bool:
        return self.requires_grad or self._backward is not None

    def backward(self):
        if self.data.size != 1:
            raise ShapeError(f"backward() needs a scalar loss, got shape {self.data.shape}")
        if self._spent:
            raise StaleGraphError("backward() already ran on this graph; re-run forward first")

        topo: list[Tensor] = []
        visited: set[int] = set()
        stack = [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                topo.append(node)
                continue
            if id(node) in visited:
                continue
            visited.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                if id(p) not in visited:
                    stack.append((p, False))

        grads: dict[int, np.ndarray] = {id(self): np.ones_like(self.data)}
        for node in reversed(topo):
            g = grads.pop(id(node), None)
            if g is None:
                continue
            if node.requires_grad:
                node.grad = g.copy() if node.grad is None else node.grad + g
            if node._backward is not None:
                for parent, pg in node._backward(g):
                    if pg is None:
                        continue
                    pid = id(parent)
                    if pid in grads:
                        grads[pid] = grads[pid] + pg
                    else:
                        grads[pid] = pg
                # release the closure so intermediates can be collected;
                # leaves (parameters) are left untouched for reuse
                node._backward = None
                node._parents = ()
                node._spent = True
        self._spent = True

    # -- operator sugar ----------------------------------------------------

    def __add__(self, other):
        return add(self, _lift(other))

    def __radd__(self, other):
        return add(_lift(other), self)

    def __sub__(self, other):
        return sub(self, _lift(other))

    def __rsub__(self, other):
        return sub(_lift(other), self)

    def __mul__(self, other):
        return mul(self, _lift(other))

    def __rmul__(self, other):
        return mul(_lift(other), self)

    def __truediv__(self, other):
        return div(self, _lift(other))

    def __rtruediv__(self, other):
        return div(_lift(other), self)

    def __neg__(self):
        return mul(self, Tensor(-1.0))

    def __matmul__(self, other):
        return matmul(self, _lift(other))

    def __pow__(self, p):
        return power(self, p)

    def __getitem__(self, idx):
        return getitem(self, idx)

    def reshape(self, *shape):
        return reshape(self, shape if len(shape) > 1 or isinstance(shape[0], int) else shape[0])

    def transpose(self, *axes):
        return transpose(self, axes)

    def sum(self, axis=None, keepdims=False):
        return sum_(self, axis, keepdims)

    def mean(self, axis=None, keepdims=False):
        return mean(self, axis, keepdims)


def _lift(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _make(data: np.ndarray, parents, backward) -> Tensor:
    out = Tensor(data)
    if any(p._needs_tape() for p in parents):
        out._parents = tuple(parents)
        out._backward = backward
    return out


def _unbroadcast(g: np.ndarray, shape: tuple) -> np.ndarray:
    if g.shape == shape:
        return g
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, (gs, ss) in enumerate(zip(g.shape, shape)) if ss == 1 and gs != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g.reshape(shape)


# -- elementwise arithmetic -----------------------------------------------

def add(a: Tensor, b: Tensor) -> Tensor:
    data = a.data + b.data

    def back(g):
        return ((a, _unbroadcast(g, a.data.shape)), (b, _unbroadcast(g, b.data.shape)))

    return _make(data, (a, b), back)


def sub(a: Tensor, b: Tensor) -> Tensor:
    data = a.data - b.data

    def back(g):
        return ((a, _unbroadcast(g, a.data.shape)), (b, _unbroadcast(-g, b.data.shape)))

    return _make(data, (a, b), back)


def mul(a: Tensor, b: Tensor) -> Tensor:
    data = a.data * b.data

    def back(g):
        return ((a, _unbroadcast(g * b.data, a.data.shape)),
                (b, _unbroadcast(g * a.data, b.data.shape)))

    return _make(data, (a, b), back)


def div(a: Tensor, b: Tensor) -> Tensor:
    data = a.data / b.data

    def back(g):
        return ((a, _unbroadcast(g / b.data, a.data.shape)),
                (b, _unbroadcast(-g * a.data / (b.data * b.data), b.data.shape)))

    return _make(data, (a, b), back)


def power(a: Tensor, p: float) -> Tensor:
    p = float(p)
    data = a.data ** p

    def back(g):
        return ((a, g * p * a.data ** (p - 1.0)),)

    return _make(data, (a,), back)


def exp(a: Tensor) -> Tensor:
    data = np.exp(a.data)

    def back(g):
        return ((a, g * data),)

    return _make(data, (a,), back)


def log(a: Tensor) -> Tensor:
    data = np.log(a.data)

    def back(g):
        return ((a, g / a.data),)

    return _make(data, (a,), back)


def sqrt(a: Tensor) -> Tensor:
    data = np.sqrt(a.data)

    def back(g):
        return ((a, g * 0.5 / data),)

    return _make(data, (a,), back)


def sin(a: Tensor) -> Tensor:
    data = np.sin(a.data)

    def back(g):
        return ((a, g * np.cos(a.data)),)

    return _make(data, (a,), back)


def cos(a: Tensor) -> Tensor:
    data = np.cos(a.data)

    def back(g):
        return ((a, -g * np.sin(a.data)),)

    return _make(data, (a,), back)


def tanh(a: Tensor) -> Tensor:
    data = np.tanh(a.data)

    def back(g):
        return ((a, g * (1.0 - data * data)),)

    return _make(data, (a,), back)


def arccos(a: Tensor) -> Tensor:
    # caller is responsible for keeping |x| strictly below 1
    data = np.arccos(np.clip(a.data, -1.0, 1.0))

    def back(g):
        denom = np.sqrt(np.maximum(1.0 - a.data * a.data, 1e-24))
        return ((a, -g / denom),)

    return _make(data, (a,), back)


def arctan2(y: Tensor, x: Tensor) -> Tensor:
    data = np.arctan2(y.data, x.data)

    def back(g):
        r2 = y.data * y.data + x.data * x.data
        return ((y, _unbroadcast(g * x.data / r2, y.data.shape)),
                (x, _unbroadcast(-g * y.data / r2, x.data.shape)))

    return _make(data, (y, x), back)


def absolute(a: Tensor) -> Tensor:
    data = np.abs(a.data)

    def back(g):
        return ((a, g * np.sign(a.data)),)

    return _make(data, (a,), back)


def relu(a: Tensor) -> Tensor:
    data = np.maximum(a.data, 0.0)

    def back(g):
        return ((a, g * (a.data > 0.0)),)

    return _make(data, (a,), back)


def silu(a: Tensor) -> Tensor:
    sig = 1.0 / (1.0 + np.exp(-a.data))
    data = a.data * sig

    def back(g):
        return ((a, g * (sig * (1.0 + a.data * (1.0 - sig)))),)

    return _make(data, (a,), back)


def gelu(a: Tensor) -> Tensor:
    # exact erf form; derivative is Phi(x) + x*phi(x)
    from scipy.special import erf

    phi_cdf = 0.5 * (1.0 + erf(a.data / np.sqrt(2.0)))
    data = a.data * phi_cdf

    def back(g):
        pdf = np.exp(-0.5 * a.data * a.data) / np.sqrt(2.0 * np.pi)
        return ((a, g * (phi_cdf + a.data * pdf)),)

    return _make(data, (a,), back)


def where(cond: np.ndarray, a: Tensor, b: Tensor) -> Tensor:
    cond = np.asarray(cond, dtype=bool)
    data = np.where(cond, a.data, b.data)

    def back(g):
        return ((a, _unbroadcast(np.where(cond, g, 0.0), a.data.shape)),
                (b, _unbroadcast(np.where(cond, 0.0, g), b.data.shape)))

    return _make(data, (a, b), back)


def clamp(a: Tensor, lo: float, hi: float) -> Tensor:
    data = np.clip(a.data, lo, hi)

    def back(g):
        inside = (a.data > lo) & (a.data < hi)
        return ((a, g * inside),)

    return _make(data, (a,), back)


def stop_grad(a: Tensor) -> Tensor:
    return Tensor(a.data.copy())


# -- reductions and shape ops ----------------------------------------------

def sum_(a: Tensor, axis=None, keepdims=False) -> Tensor:
    data = a.data.sum(axis=axis, keepdims=keepdims)

    def back(g):
        if axis is None:
            return ((a, np.broadcast_to(g, a.data.shape).copy()),)
        gg = g
        if not keepdims:
            gg = np.expand_dims(gg, axis)
        return ((a, np.broadcast_to(gg, a.data.shape).copy()),)

    return _make(data, (a,), back)


def mean(a: Tensor, axis=None, keepdims=False) -> Tensor:
    if axis is None:
        n = a.data.size
    else:
        axes = axis if isinstance(axis, tuple) else (axis,)
        n = int(np.prod([a.data.shape[ax] for ax in axes]))
    return mul(sum_(a, axis, keepdims), Tensor(1.0 / n))


def reshape(a: Tensor, shape) -> Tensor:
    data = a.data.reshape(shape)

    def back(g):
        return ((a, g.reshape(a.data.shape)),)

    return _make(data, (a,), back)


def transpose(a: Tensor, axes) -> Tensor:
    axes = tuple(axes)
    data = a.data.transpose(axes)
    inv = np.argsort(axes)

    def back(g):
        return ((a, g.transpose(inv)),)

    return _make(data, (a,), back)


def getitem(a: Tensor, idx) -> Tensor:
    data = a.data[idx]

    def back(g):
        ga = np.zeros_like(a.data)
        np.add.at(ga, idx, g)
        return ((a, ga),)

    return _make(data, (a,), back)


def concat(tensors, axis=0) -> Tensor:
    tensors = [_lift(t) for t in tensors]
    data = np.concatenate([t.data for t in tensors], axis=axis)
    sizes = [t.data.shape[axis] for t in tensors]
    offsets = np.cumsum([0] + sizes)

    def back(g):
        outs = []
        for t, lo, hi in zip(tensors, offsets[:-1], offsets[1:]):
            sl = [slice(None)] * g.ndim
            sl[axis] = slice(lo, hi)
            outs.append((t, g[tuple(sl)]))
        return tuple(outs)

    return _make(data, tuple(tensors), back)


def stack(tensors, axis=0) -> Tensor:
    tensors = [_lift(t) for t in tensors]
    data = np.stack([t.data for t in tensors], axis=axis)

    def back(g):
        parts = np.moveaxis(g, axis, 0)
        return tuple((t, parts[i]) for i, t in enumerate(tensors))

    return _make(data, tuple(tensors), back)


# -- linear algebra ----------------------------------------------------------

def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.data.ndim == 0 or b.data.ndim == 0:
        raise ShapeError("matmul needs at least 1-d operands")
    if a.data.shape[-1] != b.data.shape[-2 if b.data.ndim > 1 else 0]:
        raise ShapeError(f"matmul inner dims differ: {a.data.shape} @ {b.data.shape}")
    data = np.matmul(a.data, b.data)

    def back(g):
        ad, bd = a.data, b.data
        a1, b1 = ad.ndim == 1, bd.ndim == 1
        if a1:
            ad = ad[None, :]
        if b1:
            bd = bd[:, None]
        gg = g
        if a1:
            gg = np.expand_dims(gg, -2)
        if b1:
            gg = np.expand_dims(gg, -1)
        ga = np.matmul(gg, np.swapaxes(bd, -1, -2))
        gb = np.matmul(np.swapaxes(ad, -1, -2), gg)
        if a1:
            ga = np.squeeze(ga, -2)
        if b1:
            gb = np.squeeze(gb, -1)
        return ((a, _unbroadcast(ga, a.data.shape)), (b, _unbroadcast(gb, b.data.shape)))

    return _make(data, (a, b), back)


def softmax(a: Tensor, axis: int = -1) -> Tensor:
    shifted = a.data - a.data.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    data = e / e.sum(axis=axis, keepdims=True)

    def back(g):
        dot = (g * data).sum(axis=axis, keepdims=True)
        return ((a, data * (g - dot)),)

    return _make(data, (a,), back)


def embedding(table: Tensor, indices: np.ndarray) -> Tensor:
    indices = np.asarray(indices)
    if indices.size and (indices.min() < 0 or indices.max() >= table.data.shape[0]):
        raise IndexError(f"embedding index out of range [0, {table.data.shape[0]})")
    data = table.data[indices]

    def back(g):
        gt = np.zeros_like(table.data)
        np.add.at(gt, indices.reshape(-1), g.reshape(-1, table.data.shape[1]))
        return ((table, gt),)

    return _make(data, (table,), back)


# -- temporal convolution ----------------------------------------------------

def conv1d(x: Tensor, w: Tensor, b: Tensor | None, stride: int = 1, pad: int = 0) -> Tensor:
    """x: (B, C_in, T), w: (C_out, C_in, K), b: (C_out,) -> (B, C_out, T_out).

    Implemented as one batched matmul per kernel tap on strided views, which
    avoids materializing im2col columns.
    """
    B, Cin, T = x.data.shape
    Cout, Cin_w, K = w.data.shape
    if Cin != Cin_w:
        raise ShapeError(f"conv1d channel mismatch: input has {Cin}, kernel expects {Cin_w}")
    T_out = (T + 2 * pad - K) // stride + 1
    if T_out <= 0:
        raise ShapeError(f"conv1d output length {T_out} <= 0 for T={T}, K={K}, stride={stride}, pad={pad}")

    Tp = T + 2 * pad
    span = stride * (T_out - 1) + 1
    # channel-major padded copy: one big GEMM per tap instead of im2col
    xt = np.zeros((Cin, B, Tp))
    xt[:, :, pad:pad + T] = x.data.transpose(1, 0, 2)
    xt2 = xt.reshape(Cin, B * Tp)
    yt = np.zeros((Cout, B, T_out))
    for k in range(K):
        pk = (w.data[:, :, k] @ xt2).reshape(Cout, B, Tp)
        yt += pk[:, :, k:k + span:stride]
    data = yt.transpose(1, 0, 2).copy()
    if b is not None:
        data += b.data[:, None]

    def back(g):
        gyt = np.ascontiguousarray(g.transpose(1, 0, 2))  # (Cout, B, T_out)
        gy2 = gyt.reshape(Cout, B * T_out)
        gw = np.empty((Cout, Cin, K))
        gxt = np.zeros((Cin, B, Tp))
        for k in range(K):
            xk = xt[:, :, k:k + span:stride]
            gw[:, :, k] = np.tensordot(gyt, xk, axes=([1, 2], [1, 2]))
            gxt[:, :, k:k + span:stride] += (w.data[:, :, k].T @ gy2).reshape(Cin, B, T_out)
        gx = gxt[:, :, pad:pad + T].transpose(1, 0, 2).copy()
        outs = [(x, gx), (w, gw)]
        if b is not None:
            outs.append((b, g.sum(axis=(0, 2))))
        return tuple(outs)

    parents = (x, w) if b is None else (x, w, b)
    return _make(data, parents, back)


def upsample_nearest(x: Tensor, factor: int) -> Tensor:
    """x: (B, C, T) -> (B, C, T*factor) by repetition along time."""
    data = np.repeat(x.data, factor, axis=2)

    def back(g):
        B, C, Tf = g.shape
        return ((x, g.reshape(B, C, Tf // factor, factor).sum(axis=3)),)

    return _make(data, (x,), back)


# -- composite losses ---------------------------------------------------------

def smooth_l1(pred: Tensor, target: Tensor, delta: float = 1.0) -> Tensor:
    """Mean smooth-L1: 0.5 d^2/delta for |d| < delta, |d| - 0.5 delta beyond."""
    d = pred.data - target.data
    absd = np.abs(d)
    inside = absd < delta
    vals = np.where(inside, 0.5 * d * d / delta, absd - 0.5 * delta)
    n = vals.size
    data = np.array(vals.sum() / n)

    def back(g):
        gd = g * np.where(inside, d / delta, np.sign(d)) / n
        return ((pred, gd), (target, -gd))

    return _make(data, (pred, target), back)


def mse(pred: Tensor, target: Tensor) -> Tensor:
    d = sub(pred, target)
    return mean(mul(d, d))
