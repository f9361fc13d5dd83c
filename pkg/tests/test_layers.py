"""Finite-difference checks for every layer kind, plus composition contracts."""

import numpy as np
import pytest

from mrf import autodiff as ad
from mrf import layers as L
from mrf.autodiff import ShapeError, Tensor

from oracles import finite_difference_grads, grad_rel_err, rel_err

RNG = np.random.default_rng(7)


def layer_fd_check(layer, x, tol=1e-3, step=1e-4, shapes_note=""):
    """Check d(sum(layer(x)*probe))/d(params and input) against central FD."""
    params = layer.parameters()
    xt = Tensor(x.copy(), requires_grad=True)
    probe = Tensor(np.random.default_rng(99).normal(size=layer(Tensor(x)).shape))
    loss = ad.sum_(ad.mul(layer(xt, train=False), probe))
    loss.backward()
    arrays = [p.data.copy() for _, p in params] + [x.copy()]

    def f(arrs):
        saved = [p.data.copy() for _, p in params]
        for (_, p), a in zip(params, arrs[:-1]):
            p.data = a.copy()
        out = float(ad.sum_(ad.mul(layer(Tensor(arrs[-1]), train=False), probe)).data)
        for (_, p), s in zip(params, saved):
            p.data = s
        return out

    fd = finite_difference_grads(f, arrays, step=step)
    for (_, p), g in zip(params, fd[:-1]):
        assert grad_rel_err(p.grad, g) < tol, f"param {p.name} mismatch {shapes_note}"
    assert grad_rel_err(xt.grad, fd[-1]) < tol, f"input grad mismatch {shapes_note}"


LAYER_CASES = []
for shape in [(2, 5), (3, 4, 5), (1, 1, 5)]:
    LAYER_CASES.append(("linear", lambda: L.Linear(5, 3, RNG), shape))
for shape in [(2, 3, 8), (1, 3, 6), (4, 3, 12)]:
    LAYER_CASES.append(("conv-s1", lambda: L.TemporalConv(3, 4, 3, RNG), shape))
    LAYER_CASES.append(("conv-s2", lambda: L.TemporalConv(3, 4, 4, RNG, stride=2, pad=1), shape))
for shape in [(2, 6), (3, 4, 6), (5, 6)]:
    LAYER_CASES.append(("layernorm", lambda: L.LayerNorm(6), shape))
for kind in ("relu", "gelu", "silu"):
    for shape in [(2, 5), (3, 4), (6,)]:
        LAYER_CASES.append((f"act-{kind}", lambda k=kind: L.Activation(k), shape))
for shape in [(2, 4, 8), (1, 8, 8), (3, 2, 8)]:
    LAYER_CASES.append(("mhsa", lambda: L.MultiHeadSelfAttention(8, 2, RNG), shape))
for shape in [(2, 3, 8), (1, 5, 8)]:
    LAYER_CASES.append(("posenc", lambda: L.SinusoidalPositionalEncoding(16, 8), shape))


@pytest.mark.parametrize("name,make,shape", LAYER_CASES,
                         ids=[f"{n}-{s}" for n, _, s in LAYER_CASES])
def test_layer_gradients(name, make, shape):
    layer = make()
    x = RNG.normal(size=shape) * 0.7
    layer_fd_check(layer, x, shapes_note=f"{name} {shape}")


def test_embedding_layer_gradient():
    layer = L.Embedding(6, 4, RNG)
    idx = np.array([[0, 2], [5, 2]])
    loss = ad.sum_(ad.power(layer(idx), 2.0))
    loss.backward()
    g = layer.table.grad
    fd = finite_difference_grads(
        lambda arrs: float(np.sum(arrs[0][idx] ** 2)), [layer.table.data.copy()], step=1e-4)[0]
    assert rel_err(g, fd) < 1e-6


def test_identity_linear_and_relu_values():
    lin = L.Linear(3, 3, RNG)
    lin.w.data = np.eye(3)
    lin.b.data = np.zeros(3)
    x = RNG.normal(size=(4, 3))
    assert np.allclose(L.forward(lin, x).data, x)
    act = L.Activation("relu")
    assert np.allclose(act(Tensor(np.array([-1.0, 2.0]))).data, [0.0, 2.0])


def test_sinusoidal_position_zero_even_channel():
    table = L.sinusoidal_table(4, 8)
    assert table[0, 0] == 0.0  # sin(0)
    assert np.all(table[0, 0::2] == 0.0)
    assert np.all(table[0, 1::2] == 1.0)  # cos(0)


def test_attention_head_divisibility():
    with pytest.raises(ShapeError):
        L.MultiHeadSelfAttention(10, 3, RNG)


def test_shape_mismatch_message():
    lin = L.Linear(5, 3, RNG)
    with pytest.raises(ShapeError, match="expected last dim 5"):
        lin(Tensor(np.ones((2, 4))))


def test_eval_mode_deterministic_with_dropout():
    rng = np.random.default_rng(0)
    net = L.Sequential([L.Linear(4, 8, rng), L.Dropout(0.5, rng), L.Activation("gelu"),
                        L.Linear(8, 2, rng)])
    x = RNG.normal(size=(3, 4))
    y1 = L.forward(net, x, mode="eval").data
    y2 = L.forward(net, x, mode="eval").data
    assert np.array_equal(y1, y2)
    t1 = L.forward(net, x, mode="train").data
    t2 = L.forward(net, x, mode="train").data
    assert not np.array_equal(t1, t2)  # dropout active only in train mode


def test_fused_equals_sequential_composition():
    rng = np.random.default_rng(3)
    l1 = L.Linear(4, 6, rng)
    l2 = L.Activation("silu")
    l3 = L.LayerNorm(6)
    l4 = L.Linear(6, 2, rng)
    fused = L.Sequential([l1, l2, l3, l4])
    x = RNG.normal(size=(5, 4))
    y_fused = L.forward(fused, x).data
    h = L.forward(l1, x)
    h = l2(h)
    h = l3(h)
    y_seq = l4(h).data
    assert np.max(np.abs(y_fused - y_seq)) < 1e-12


def test_transformer_encoder_layer_grad():
    rng = np.random.default_rng(11)
    enc = L.TransformerEncoderLayer(8, 2, 16, rng, dropout=0.0)
    x = RNG.normal(size=(2, 3, 8)) * 0.5
    layer_fd_check(enc, x, tol=2e-3)


def test_forward_mode_validation():
    lin = L.Linear(2, 2, RNG)
    with pytest.raises(ValueError):
        L.forward(lin, np.ones((1, 2)), mode="sample")
