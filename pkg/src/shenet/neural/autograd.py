"""Small reverse-mode autodiff over float64 numpy arrays.

Only the operations the model needs are provided. Attention, softmax and layer
norm are fused ops with hand-written backward passes to keep graphs short.
"""

from __future__ import annotations

import contextlib
import math

import numpy as np

from ..errors import GraphError, ShapeError

_grad_enabled = True


@contextlib.contextmanager
def no_grad():
    """Build no graph inside the block (forward-only evaluation)."""
    global _grad_enabled
    prev, _grad_enabled = _grad_enabled, False
    try:
        yield
    finally:
        _grad_enabled = prev


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward", "name")

    def __init__(self, data, requires_grad: bool = False, name: str | None = None):
        self.data = np.array(data, dtype=np.float64)
        self.grad = None
        self.requires_grad = bool(requires_grad)
        self._parents = ()
        self._backward = None
        self.name = name

    # ----- basics --------------------------------------------------------
    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def size(self):
        return self.data.size

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data)

    def zero_grad(self):
        self.grad = None

    def __repr__(self):
        tag = f" {self.name}" if self.name else ""
        return f"Tensor{tag}(shape={self.shape}, requires_grad={self.requires_grad})"

    # ----- operators -----------------------------------------------------
    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return add(self, neg(as_tensor(other)))

    def __rsub__(self, other):
        return add(as_tensor(other), neg(self))

    def __neg__(self):
        return neg(self)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        if isinstance(other, Tensor):
            raise TypeError("division by a tensor is not supported")
        return mul(self, 1.0 / other)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, idx):
        return getitem(self, idx)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)

    def transpose(self, *axes):
        return transpose(self, axes or None)

    @property
    def T(self):
        return transpose(self, None)

    def sum(self, axis=None, keepdims=False):
        return tsum(self, axis, keepdims)

    def mean(self, axis=None, keepdims=False):
        return tmean(self, axis, keepdims)

    # ----- autodiff ------------------------------------------------------
    def backward(self, grad=None):
        backward(self, grad)


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _result(data, parents, backward_fn) -> Tensor:
    out = Tensor.__new__(Tensor)
    out.data = data
    out.grad = None
    out.name = None
    out.requires_grad = _grad_enabled and any(p.requires_grad for p in parents)
    if out.requires_grad:
        out._parents = tuple(parents)
        out._backward = backward_fn
    else:
        out._parents = ()
        out._backward = None
    return out


def _acc(t: Tensor, g):
    if not t.requires_grad:
        return
    if t.grad is None:
        t.grad = np.array(g, dtype=np.float64, copy=True).reshape(t.data.shape)
    else:
        t.grad += g


def _unbroadcast(g: np.ndarray, shape) -> np.ndarray:
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for ax, n in enumerate(shape):
        if n == 1 and g.shape[ax] != 1:
            g = g.sum(axis=ax, keepdims=True)
    return g


# ----- elementary ops -------------------------------------------------------

def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)

    def bw(g):
        _acc(a, _unbroadcast(g, a.shape))
        _acc(b, _unbroadcast(g, b.shape))

    return _result(a.data + b.data, (a, b), bw)


def neg(a) -> Tensor:
    a = as_tensor(a)
    return _result(-a.data, (a,), lambda g: _acc(a, -g))


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)

    def bw(g):
        if a.requires_grad:
            _acc(a, _unbroadcast(g * b.data, a.shape))
        if b.requires_grad:
            _acc(b, _unbroadcast(g * a.data, b.shape))

    return _result(a.data * b.data, (a, b), bw)


def matmul(a, b) -> Tensor:
    """Batched matrix product with numpy broadcasting; both operands at least 2-D."""
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim < 2 or b.ndim < 2:
        raise ShapeError("matmul operands must be at least 2-D")

    def bw(g):
        if a.requires_grad:
            _acc(a, _unbroadcast(g @ np.swapaxes(b.data, -1, -2), a.shape))
        if b.requires_grad:
            _acc(b, _unbroadcast(np.swapaxes(a.data, -1, -2) @ g, b.shape))

    return _result(a.data @ b.data, (a, b), bw)


def linear(x, W, b=None) -> Tensor:
    """``x @ W + b`` for ``x`` of shape (..., n_in) and ``W`` of shape (n_in, n_out)."""
    x, W = as_tensor(x), as_tensor(W)
    out = x.data @ W.data
    parents = (x, W)
    if b is not None:
        b = as_tensor(b)
        out = out + b.data
        parents = (x, W, b)

    def bw(g):
        if x.requires_grad:
            _acc(x, g @ W.data.T)
        if W.requires_grad:
            _acc(W, x.data.reshape(-1, x.shape[-1]).T @ g.reshape(-1, g.shape[-1]))
        if b is not None and b.requires_grad:
            _acc(b, g.reshape(-1, g.shape[-1]).sum(axis=0))

    return _result(out, parents, bw)


def reshape(a, shape) -> Tensor:
    a = as_tensor(a)
    return _result(a.data.reshape(shape), (a,), lambda g: _acc(a, g.reshape(a.shape)))


def transpose(a, axes=None) -> Tensor:
    a = as_tensor(a)
    if axes is not None and len(axes) == 1 and isinstance(axes[0], (tuple, list)):
        axes = tuple(axes[0])
    inv = None if axes is None else tuple(np.argsort(axes))
    return _result(np.transpose(a.data, axes), (a,), lambda g: _acc(a, np.transpose(g, inv)))


def getitem(a, idx) -> Tensor:
    a = as_tensor(a)

    def bw(g):
        full = np.zeros_like(a.data)
        np.add.at(full, idx, g)
        _acc(a, full)

    return _result(a.data[idx], (a,), bw)


def concat(tensors, axis: int = -1) -> Tensor:
    ts = [as_tensor(t) for t in tensors]
    sizes = [t.shape[axis] for t in ts]
    bounds = np.cumsum(sizes)[:-1]

    def bw(g):
        for t, piece in zip(ts, np.split(g, bounds, axis=axis)):
            _acc(t, piece)

    return _result(np.concatenate([t.data for t in ts], axis=axis), ts, bw)


def tsum(a, axis=None, keepdims=False) -> Tensor:
    a = as_tensor(a)

    def bw(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        _acc(a, np.broadcast_to(g, a.shape))

    return _result(np.asarray(a.data.sum(axis=axis, keepdims=keepdims)), (a,), bw)


def tmean(a, axis=None, keepdims=False) -> Tensor:
    a = as_tensor(a)
    n = a.size if axis is None else np.prod([a.shape[ax] for ax in np.atleast_1d(axis)])
    return tsum(a, axis, keepdims) * (1.0 / n)


def tmax(a, axis: int) -> Tensor:
    """Max over one axis; gradient goes to the first maximal element."""
    a = as_tensor(a)
    idx = np.argmax(a.data, axis=axis)

    def bw(g):
        full = np.zeros_like(a.data)
        np.put_along_axis(full, np.expand_dims(idx, axis), np.expand_dims(g, axis), axis=axis)
        _acc(a, full)

    return _result(np.take_along_axis(a.data, np.expand_dims(idx, axis), axis=axis).squeeze(axis), (a,), bw)


def relu(a) -> Tensor:
    a = as_tensor(a)
    mask = a.data > 0
    return _result(a.data * mask, (a,), lambda g: _acc(a, g * mask))


def tanh(a) -> Tensor:
    a = as_tensor(a)
    y = np.tanh(a.data)
    return _result(y, (a,), lambda g: _acc(a, g * (1.0 - y * y)))


_GELU_C = math.sqrt(2.0 / math.pi)


def gelu(a) -> Tensor:
    """Tanh approximation of GELU (smooth, so finite differences stay valid)."""
    a = as_tensor(a)
    x = a.data
    u = _GELU_C * (x + 0.044715 * x**3)
    th = np.tanh(u)
    y = 0.5 * x * (1.0 + th)

    def bw(g):
        du = _GELU_C * (1.0 + 3 * 0.044715 * x * x)
        _acc(a, g * (0.5 * (1.0 + th) + 0.5 * x * (1.0 - th * th) * du))

    return _result(y, (a,), bw)


def _softmax_np(x, axis=-1):
    z = x - x.max(axis=axis, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=axis, keepdims=True)


def softmax(a, axis: int = -1) -> Tensor:
    a = as_tensor(a)
    y = _softmax_np(a.data, axis)

    def bw(g):
        _acc(a, y * (g - (g * y).sum(axis=axis, keepdims=True)))

    return _result(y, (a,), bw)


def layer_norm(x, gamma, beta, eps: float = 1e-5) -> Tensor:
    """Normalise over the last axis, then scale and shift."""
    x, gamma, beta = as_tensor(x), as_tensor(gamma), as_tensor(beta)
    mu = x.data.mean(axis=-1, keepdims=True)
    xc = x.data - mu
    var = (xc * xc).mean(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = xc * inv
    n = x.shape[-1]

    def bw(g):
        if gamma.requires_grad:
            _acc(gamma, (g * xhat).reshape(-1, n).sum(axis=0))
        if beta.requires_grad:
            _acc(beta, g.reshape(-1, n).sum(axis=0))
        if x.requires_grad:
            gx = g * gamma.data
            _acc(x, inv * (gx - gx.mean(axis=-1, keepdims=True) - xhat * (gx * xhat).mean(axis=-1, keepdims=True)))

    return _result(xhat * gamma.data + beta.data, (x, gamma, beta), bw)


def _split_heads(a: np.ndarray, n_heads: int) -> np.ndarray:
    t, d = a.shape
    return a.reshape(t, n_heads, d // n_heads).transpose(1, 0, 2)


def _merge_heads(a: np.ndarray) -> np.ndarray:
    h, t, dh = a.shape
    return a.transpose(1, 0, 2).reshape(t, h * dh)


def attention_weights(q: np.ndarray, k: np.ndarray, n_heads: int) -> np.ndarray:
    """Softmax(Q K^T / sqrt(d_head)) per head, shape (n_heads, T_q, T_k)."""
    dh = q.shape[-1] // n_heads
    s = _split_heads(q, n_heads) @ _split_heads(k, n_heads).transpose(0, 2, 1) / math.sqrt(dh)
    return _softmax_np(s, axis=-1)


def attention(q, k, v, n_heads: int):
    """Multi-head scaled dot-product attention on already-projected tokens.

    ``q`` is (T_q, d), ``k`` and ``v`` are (T_k, d). Returns the merged head
    outputs (T_q, d) and the attention weights as a plain array.
    """
    q, k, v = as_tensor(q), as_tensor(k), as_tensor(v)
    d = q.shape[-1]
    if d % n_heads or k.shape[-1] != d or v.shape[-1] != d or k.shape[0] != v.shape[0]:
        raise ShapeError(f"incompatible attention shapes {q.shape}, {k.shape}, {v.shape} for {n_heads} heads")
    scale = 1.0 / math.sqrt(d // n_heads)
    qh, kh, vh = _split_heads(q.data, n_heads), _split_heads(k.data, n_heads), _split_heads(v.data, n_heads)
    A = _softmax_np(qh @ kh.transpose(0, 2, 1) * scale, axis=-1)
    out = _merge_heads(A @ vh)

    def bw(g):
        gh = _split_heads(g, n_heads)
        if v.requires_grad:
            _acc(v, _merge_heads(A.transpose(0, 2, 1) @ gh))
        if q.requires_grad or k.requires_grad:
            dA = gh @ vh.transpose(0, 2, 1)
            dS = A * (dA - (dA * A).sum(axis=-1, keepdims=True)) * scale
            if q.requires_grad:
                _acc(q, _merge_heads(dS @ kh))
            if k.requires_grad:
                _acc(k, _merge_heads(dS.transpose(0, 2, 1) @ qh))

    return _result(out, (q, k, v), bw), A


def dropout(x, p: float, rng: np.random.Generator | None, training: bool = True) -> Tensor:
    if not training or p <= 0.0:
        return as_tensor(x)
    if rng is None:
        raise ValueError("dropout needs a random generator")
    mask = (rng.random(x.shape) >= p) / (1.0 - p)
    return mul(x, mask)


# ----- backward -------------------------------------------------------------

def _topo(root: Tensor) -> list[Tensor]:
    order, state = [], {}
    stack = [(root, False)]
    while stack:
        node, done = stack.pop()
        key = id(node)
        if done:
            state[key] = 2
            order.append(node)
            continue
        st = state.get(key)
        if st == 2:
            continue
        if st == 1:
            raise GraphError("cycle detected in computation graph")
        state[key] = 1
        stack.append((node, True))
        for p in node._parents:
            ps = state.get(id(p))
            if ps == 1:
                raise GraphError("cycle detected in computation graph")
            if ps is None and p._backward is not None:
                stack.append((p, False))
    return order


def backward(loss: Tensor, grad=None) -> None:
    """Accumulate d(loss)/d(leaf) into ``.grad`` of every tensor that requires it."""
    if not isinstance(loss, Tensor) or not loss.requires_grad:
        raise GraphError("loss is detached from every trainable tensor")
    if grad is None:
        if loss.size != 1:
            raise GraphError("backward without an explicit gradient needs a scalar loss")
        grad = np.ones_like(loss.data)
    order = _topo(loss)  # interior nodes only; leaves just accumulate
    for node in order:
        node.grad = None
    _acc(loss, np.asarray(grad, dtype=np.float64))
    for node in reversed(order):
        if node._backward is not None and node.grad is not None:
            node._backward(node.grad)
