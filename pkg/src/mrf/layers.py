"""Neural layers on top of the autodiff engine.

Layers are callable objects: `layer(x, train=False)`. Weights are uniform
init scaled by fan-in. A Sequential composes layers into the graphs used by
the tokenizer and the flow transformer.
"""

from __future__ import annotations

import numpy as np

from . import autodiff as ad
from .autodiff import ShapeError, Tensor


def _uniform(rng: np.random.Generator, shape, fan_in: int) -> np.ndarray:
    bound = 1.0 / np.sqrt(max(fan_in, 1))
    return rng.uniform(-bound, bound, size=shape)


class Layer:
    def __call__(self, x, train: bool = False) -> Tensor:
        raise NotImplementedError

    def parameters(self) -> list[tuple[str, Tensor]]:
        return []


class Linear(Layer):
    def __init__(self, d_in: int, d_out: int, rng: np.random.Generator, bias: bool = True, name: str = "linear"):
        self.d_in, self.d_out = d_in, d_out
        self.name = name
        self.w = Tensor(_uniform(rng, (d_in, d_out), d_in), requires_grad=True, name=f"{name}.w")
        self.b = Tensor(_uniform(rng, (d_out,), d_in), requires_grad=True, name=f"{name}.b") if bias else None

    def __call__(self, x, train: bool = False) -> Tensor:
        if x.shape[-1] != self.d_in:
            raise ShapeError(f"{self.name}: expected last dim {self.d_in}, got {x.shape[-1]}")
        y = ad.matmul(x, self.w)
        return ad.add(y, self.b) if self.b is not None else y

    def parameters(self):
        ps = [(f"{self.name}.w", self.w)]
        if self.b is not None:
            ps.append((f"{self.name}.b", self.b))
        return ps


class TemporalConv(Layer):
    """1-d convolution over the time axis; input (B, C, T)."""

    def __init__(self, c_in: int, c_out: int, kernel: int, rng: np.random.Generator,
                 stride: int = 1, pad: int | None = None, name: str = "conv"):
        self.c_in, self.c_out, self.kernel, self.stride = c_in, c_out, kernel, stride
        self.pad = (kernel - 1) // 2 if pad is None else pad
        self.name = name
        fan_in = c_in * kernel
        self.w = Tensor(_uniform(rng, (c_out, c_in, kernel), fan_in), requires_grad=True, name=f"{name}.w")
        self.b = Tensor(_uniform(rng, (c_out,), fan_in), requires_grad=True, name=f"{name}.b")

    def __call__(self, x, train: bool = False) -> Tensor:
        return ad.conv1d(x, self.w, self.b, stride=self.stride, pad=self.pad)

    def parameters(self):
        return [(f"{self.name}.w", self.w), (f"{self.name}.b", self.b)]


class UpsampleNearest(Layer):
    def __init__(self, factor: int = 2):
        self.factor = factor

    def __call__(self, x, train: bool = False) -> Tensor:
        return ad.upsample_nearest(x, self.factor)


_ACTIVATIONS = {"relu": ad.relu, "gelu": ad.gelu, "silu": ad.silu}


class Activation(Layer):
    def __init__(self, kind: str):
        if kind not in _ACTIVATIONS:
            raise ValueError(f"unknown activation {kind!r}; expected one of {sorted(_ACTIVATIONS)}")
        self.kind = kind
        self._fn = _ACTIVATIONS[kind]

    def __call__(self, x, train: bool = False) -> Tensor:
        return self._fn(x)


class LayerNorm(Layer):
    def __init__(self, dim: int, eps: float = 1e-5, name: str = "ln"):
        self.dim, self.eps, self.name = dim, eps, name
        self.gamma = Tensor(np.ones(dim), requires_grad=True, name=f"{name}.gamma")
        self.beta = Tensor(np.zeros(dim), requires_grad=True, name=f"{name}.beta")

    def __call__(self, x, train: bool = False) -> Tensor:
        mu = ad.mean(x, axis=-1, keepdims=True)
        centered = ad.sub(x, mu)
        var = ad.mean(ad.mul(centered, centered), axis=-1, keepdims=True)
        inv = ad.power(ad.add(var, Tensor(self.eps)), -0.5)
        return ad.add(ad.mul(ad.mul(centered, inv), self.gamma), self.beta)

    def parameters(self):
        return [(f"{self.name}.gamma", self.gamma), (f"{self.name}.beta", self.beta)]


class Dropout(Layer):
    """Inverted dropout; identity in eval mode."""

    def __init__(self, p: float, rng: np.random.Generator):
        self.p = float(p)
        self.rng = rng

    def __call__(self, x, train: bool = False) -> Tensor:
        if not train or self.p <= 0.0:
            return x
        keep = (self.rng.random(x.shape) >= self.p) / (1.0 - self.p)
        return ad.mul(x, Tensor(keep))


class Embedding(Layer):
    """Index lookup into a learned table; call with an integer index array."""

    def __init__(self, count: int, dim: int, rng: np.random.Generator, name: str = "embed"):
        self.count, self.dim, self.name = count, dim, name
        self.table = Tensor(_uniform(rng, (count, dim), dim), requires_grad=True, name=f"{name}.table")

    def __call__(self, indices, train: bool = False) -> Tensor:
        return ad.embedding(self.table, np.asarray(indices))

    def parameters(self):
        return [(f"{self.name}.table", self.table)]


def sinusoidal_table(length: int, dim: int) -> np.ndarray:
    """Classic sin/cos positional table: even channels sin, odd channels cos."""
    pos = np.arange(length)[:, None].astype(np.float64)
    i = np.arange(0, dim, 2).astype(np.float64)
    angles = pos / np.power(10000.0, i / dim)
    table = np.zeros((length, dim))
    table[:, 0::2] = np.sin(angles)
    table[:, 1::2] = np.cos(angles[:, : dim // 2])
    return table


def sinusoidal_features(values: np.ndarray, dim: int, scale: float = 1000.0) -> np.ndarray:
    """Sin/cos featurization of continuous scalars (used for the flow time q)."""
    v = np.asarray(values, dtype=np.float64).reshape(-1, 1) * scale
    i = np.arange(0, dim, 2).astype(np.float64)
    angles = v / np.power(10000.0, i / dim)
    out = np.zeros((v.shape[0], dim))
    out[:, 0::2] = np.sin(angles)
    out[:, 1::2] = np.cos(angles[:, : dim // 2])
    return out


class SinusoidalPositionalEncoding(Layer):
    """Adds the fixed sin/cos table to a (B, T, D) stream."""

    def __init__(self, max_len: int, dim: int):
        self.max_len, self.dim = max_len, dim
        self._table = sinusoidal_table(max_len, dim)

    def table(self, length: int) -> np.ndarray:
        if length > self.max_len:
            raise ShapeError(f"positional encoding supports length <= {self.max_len}, got {length}")
        return self._table[:length]

    def __call__(self, x, train: bool = False) -> Tensor:
        return ad.add(x, Tensor(self.table(x.shape[-2])))


class MultiHeadSelfAttention(Layer):
    """Unmasked self-attention over (B, T, D) with D divisible by the head count."""

    def __init__(self, d_model: int, n_heads: int, rng: np.random.Generator,
                 dropout: float = 0.0, name: str = "mhsa"):
        if d_model % n_heads != 0:
            raise ShapeError(f"{name}: d_model {d_model} not divisible by n_heads {n_heads}")
        self.d_model, self.n_heads = d_model, n_heads
        self.d_head = d_model // n_heads
        self.name = name
        self.qkv = Linear(d_model, 3 * d_model, rng, name=f"{name}.qkv")
        self.proj = Linear(d_model, d_model, rng, name=f"{name}.proj")
        self.drop = Dropout(dropout, rng)

    def __call__(self, x, train: bool = False) -> Tensor:
        B, T, D = x.shape
        qkv = self.qkv(x)  # (B, T, 3D)
        q = qkv[:, :, 0:D]
        k = qkv[:, :, D:2 * D]
        v = qkv[:, :, 2 * D:3 * D]

        def heads(t):
            return ad.transpose(ad.reshape(t, (B, T, self.n_heads, self.d_head)), (0, 2, 1, 3))

        q, k, v = heads(q), heads(k), heads(v)
        scores = ad.mul(ad.matmul(q, ad.transpose(k, (0, 1, 3, 2))), Tensor(1.0 / np.sqrt(self.d_head)))
        attn = ad.softmax(scores, axis=-1)
        attn = self.drop(attn, train)
        out = ad.matmul(attn, v)  # (B, h, T, dh)
        out = ad.reshape(ad.transpose(out, (0, 2, 1, 3)), (B, T, D))
        return self.proj(out)

    def parameters(self):
        return self.qkv.parameters() + self.proj.parameters()


class Sequential(Layer):
    def __init__(self, layers: list[Layer]):
        self.layers = list(layers)

    def __call__(self, x, train: bool = False) -> Tensor:
        for layer in self.layers:
            x = layer(x, train)
        return x

    def parameters(self):
        ps = []
        for layer in self.layers:
            ps.extend(layer.parameters())
        return ps


class TransformerEncoderLayer(Layer):
    """Post-norm encoder block: attention + residual, then feedforward + residual."""

    def __init__(self, d_model: int, n_heads: int, d_ff: int, rng: np.random.Generator,
                 dropout: float = 0.0, activation: str = "gelu", name: str = "enc"):
        self.attn = MultiHeadSelfAttention(d_model, n_heads, rng, dropout, name=f"{name}.attn")
        self.ln1 = LayerNorm(d_model, name=f"{name}.ln1")
        self.ln2 = LayerNorm(d_model, name=f"{name}.ln2")
        self.ff1 = Linear(d_model, d_ff, rng, name=f"{name}.ff1")
        self.ff2 = Linear(d_ff, d_model, rng, name=f"{name}.ff2")
        self.act = Activation(activation)
        self.drop = Dropout(dropout, rng)

    def __call__(self, x, train: bool = False) -> Tensor:
        a = self.drop(self.attn(x, train), train)
        x = self.ln1(ad.add(x, a))
        f = self.drop(self.ff2(self.act(self.ff1(x))), train)
        return self.ln2(ad.add(x, f))

    def parameters(self):
        ps = []
        for sub in (self.attn, self.ln1, self.ln2, self.ff1, self.ff2):
            ps.extend(sub.parameters())
        return ps


def forward(graph: Layer, x, mode: str = "eval") -> Tensor:
    """Run a composed graph in 'train' or 'eval' mode."""
    if mode not in ("train", "eval"):
        raise ValueError(f"mode must be 'train' or 'eval', got {mode!r}")
    x = x if isinstance(x, Tensor) else Tensor(x)
    return graph(x, train=(mode == "train"))
