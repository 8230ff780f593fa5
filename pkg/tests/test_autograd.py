import math

import numpy as np
import pytest

from shenet.errors import GraphError, ShapeError
from shenet.neural import autograd as ag
from shenet.neural.autograd import Tensor


def numeric_grad(f, arrays, eps=1e-6):
    """Central differences of scalar f(*arrays) w.r.t. every entry of every array."""
    grads = []
    for a in arrays:
        g = np.zeros_like(a)
        for idx in np.ndindex(a.shape):
            old = a[idx]
            a[idx] = old + eps
            hi = f(*arrays)
            a[idx] = old - eps
            lo = f(*arrays)
            a[idx] = old
            g[idx] = (hi - lo) / (2 * eps)
        grads.append(g)
    return grads


def check(op, *shapes, seed=0, weight_seed=1, tol=1e-6):
    """Compare reverse-mode and finite-difference gradients of sum(w * op(*inputs))."""
    rng = np.random.default_rng(seed)
    arrays = [rng.normal(size=s) for s in shapes]
    out_shape = op(*[Tensor(a) for a in arrays]).shape
    w = np.random.default_rng(weight_seed).normal(size=out_shape)

    def f(*arrs):
        return float((op(*[Tensor(a) for a in arrs]).data * w).sum())

    ts = [Tensor(a.copy(), requires_grad=True) for a in arrays]
    loss = ag.tsum(op(*ts) * w)
    loss.backward()
    for t, g in zip(ts, numeric_grad(f, [a.copy() for a in arrays])):
        assert np.allclose(t.grad, g, atol=tol, rtol=tol), (t.grad, g)


def test_elementwise_and_broadcast():
    check(lambda a, b: a + b, (3, 4), (4,))
    check(lambda a, b: a * b, (3, 4), (3, 1))
    check(lambda a, b: a - b, (2, 3), (2, 3))
    check(lambda a: -a * 3.0 / 2.0, (5,))


def test_matmul_and_linear():
    check(lambda a, b: a @ b, (3, 4), (4, 2))
    check(lambda x, W, b: ag.linear(x, W, b), (5, 3), (3, 4), (4,))
    check(lambda x, W: ag.linear(x, W), (2, 5, 3), (3, 4))


def test_shape_ops():
    check(lambda a: a.reshape(6, 2), (3, 4))
    check(lambda a: a.transpose(1, 0, 2), (2, 3, 4))
    check(lambda a: a[1:, ::2], (4, 5))
    check(lambda a: a[-1], (4, 5))
    check(lambda a, b: ag.concat([a, b], axis=0), (2, 3), (4, 3))
    check(lambda a, b: ag.concat([a, b], axis=-1), (2, 3), (2, 5))


def test_reductions():
    check(lambda a: ag.tsum(a, axis=0), (3, 4))
    check(lambda a: ag.tmean(a, axis=1, keepdims=True), (3, 4))
    check(lambda a: ag.tmean(a), (3, 4))
    check(lambda a: ag.tmax(a, axis=0), (5, 3))


def test_nonlinearities():
    check(ag.tanh, (4, 3))
    check(ag.gelu, (4, 3))
    check(ag.relu, (4, 3), seed=3)
    check(lambda a: ag.softmax(a, axis=-1), (3, 5))
    check(lambda x, g, b: ag.layer_norm(x, g, b), (4, 6), (6,), (6,))


def test_gelu_values():
    x = np.array([-2.0, 0.0, 1.0, 3.0])
    ref = 0.5 * x * (1 + np.tanh(math.sqrt(2 / math.pi) * (x + 0.044715 * x**3)))
    assert np.allclose(ag.gelu(Tensor(x)).data, ref)


def naive_attention(q, k, v, h):
    d = q.shape[1]
    dh = d // h
    outs = []
    for i in range(h):
        sl = slice(i * dh, (i + 1) * dh)
        s = q[:, sl] @ k[:, sl].T / math.sqrt(dh)
        a = np.exp(s - s.max(axis=1, keepdims=True))
        a /= a.sum(axis=1, keepdims=True)
        outs.append(a @ v[:, sl])
    return np.concatenate(outs, axis=1)


def test_attention_matches_naive_and_rows_sum_to_one():
    rng = np.random.default_rng(0)
    q, k, v = rng.normal(size=(5, 8)), rng.normal(size=(7, 8)), rng.normal(size=(7, 8))
    out, A = ag.attention(Tensor(q), Tensor(k), Tensor(v), 2)
    assert np.allclose(out.data, naive_attention(q, k, v, 2), atol=1e-12)
    assert A.shape == (2, 5, 7)
    assert np.allclose(A.sum(axis=-1), 1.0, atol=1e-12)
    assert np.allclose(ag.attention_weights(q, k, 2), A)


def test_attention_gradients():
    check(lambda q, k, v: ag.attention(q, k, v, 2)[0], (3, 4), (5, 4), (5, 4))
    check(lambda q, k, v: ag.attention(q, k, v, 4)[0], (2, 8), (2, 8), (2, 8), seed=5)


def test_attention_shape_error():
    with pytest.raises(ShapeError):
        ag.attention(Tensor(np.zeros((2, 6))), Tensor(np.zeros((2, 6))), Tensor(np.zeros((2, 6))), 4)


def test_shared_subexpression_accumulates():
    x = Tensor(np.array([1.5, -2.0]), requires_grad=True)
    y = x * x + x
    ag.tsum(y * y).backward()
    # d/dx (x^2 + x)^2 = 2 (x^2 + x)(2x + 1)
    xv = x.data
    assert np.allclose(x.grad, 2 * (xv**2 + xv) * (2 * xv + 1))


def test_no_grad_builds_no_graph():
    x = Tensor(np.ones(3), requires_grad=True)
    with ag.no_grad():
        y = ag.tsum(x * 2.0)
    assert not y.requires_grad
    with pytest.raises(GraphError):
        y.backward()


def test_detached_and_non_scalar_loss():
    with pytest.raises(GraphError):
        ag.backward(ag.tsum(Tensor(np.ones(3))))
    x = Tensor(np.ones(3), requires_grad=True)
    with pytest.raises(GraphError):
        (x * 2.0).backward()
    (x * 2.0).backward(np.ones(3))
    assert np.allclose(x.grad, 2.0)


def test_cycle_detected():
    x = Tensor(np.ones(2), requires_grad=True)
    y = x * 2.0
    z = y + 1.0
    y._parents = (z,)  # hand-made loop
    with pytest.raises(GraphError):
        ag.tsum(z).backward()


def test_dropout():
    x = Tensor(np.ones((100, 10)))
    assert ag.dropout(x, 0.5, None, training=False) is x
    y = ag.dropout(x, 0.5, np.random.default_rng(0))
    kept = y.data != 0
    assert 0.35 < kept.mean() < 0.65
    assert np.all(y.data[kept] == 2.0)
