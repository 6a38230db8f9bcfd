"""A small reverse-mode automatic differentiation kernel on numpy arrays.

Only the operations needed by the graph transformer and the message-passing
network are provided. Each op records its parents and a closure that pushes
the output gradient back to them; :meth:`Tensor.backward` walks the graph in
reverse topological order.
"""
from __future__ import annotations

import math

import numpy as np
from scipy.special import erf

DEFAULT_DTYPE = np.float64

_SQRT2 = math.sqrt(2.0)
_INV_SQRT_2PI = 1.0 / math.sqrt(2.0 * math.pi)


class ShapeError(ValueError):
    pass


def _unbroadcast(grad, shape):
    """Sum ``grad`` down to ``shape`` after numpy broadcasting."""
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward", "name")

    def __init__(self, data, requires_grad=False, dtype=None, name=None):
        if isinstance(data, Tensor):
            data = data.data
        if dtype is None:
            floating = isinstance(data, np.ndarray) and data.dtype in (np.float32, np.float64)
            dtype = data.dtype if floating else DEFAULT_DTYPE
        self.data = np.asarray(data, dtype=dtype)
        self.grad = None
        self.requires_grad = requires_grad
        self._parents = ()
        self._backward = None
        self.name = name

    # -- plumbing ---------------------------------------------------------
    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def dtype(self):
        return self.data.dtype

    def __repr__(self):
        return f"Tensor(shape={self.shape}, dtype={self.dtype}, requires_grad={self.requires_grad})"

    def numpy(self):
        return self.data

    def zero_grad(self):
        self.grad = None

    def _accumulate(self, g):
        if self.grad is None:
            self.grad = np.array(g, dtype=self.data.dtype, copy=True)
        else:
            self.grad += g

    def backward(self, grad=None):
        if grad is None:
            if self.data.size != 1:
                raise ShapeError(f"backward() without a gradient needs a scalar, got shape {self.shape}")
            grad = np.ones_like(self.data)
        topo, seen = [], set()
        stack = [(self, False)]
        while stack:
            node, done = stack.pop()
            if done:
                topo.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                if id(p) not in seen:
                    stack.append((p, False))
        self._accumulate(np.asarray(grad, dtype=self.data.dtype))
        for node in reversed(topo):
            if node._backward is not None and node.grad is not None:
                node._backward(node.grad)
        # release intermediate gradients; leaves keep theirs
        for node in topo:
            if node._parents:
                node.grad = None

    # -- operators --------------------------------------------------------
    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return add(self, neg(as_tensor(other, self.dtype)))

    def __rsub__(self, other):
        return add(as_tensor(other, self.dtype), neg(self))

    def __mul__(self, other):
        if np.isscalar(other):
            return scale(self, other)
        return mul(self, other)

    __rmul__ = __mul__

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)

    def reshape(self, *shape):
        return reshape(self, shape[0] if len(shape) == 1 and isinstance(shape[0], tuple) else shape)

    def transpose(self, *axes):
        return transpose(self, axes)

    def sum(self, axis=None, keepdims=False):
        return tsum(self, axis, keepdims)

    def mean(self, axis=None, keepdims=False):
        return mean(self, axis, keepdims)


def as_tensor(x, dtype=None):
    return x if isinstance(x, Tensor) else Tensor(x, dtype=dtype)


def _make(data, parents, backward):
    out = Tensor(data, dtype=data.dtype)
    parents = tuple(p for p in parents if p.requires_grad)
    if parents:
        out.requires_grad = True
        out._parents = parents
        out._backward = backward
    return out


def _check_broadcast(op, a, b):
    try:
        return np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise ShapeError(f"{op}: incompatible shapes {a.shape} and {b.shape}") from None


# ---------------------------------------------------------------------------
# elementwise

def add(a, b):
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast("add", a, b)

    def backward(g):
        if a.requires_grad:
            a._accumulate(_unbroadcast(g, a.shape))
        if b.requires_grad:
            b._accumulate(_unbroadcast(g, b.shape))

    return _make(a.data + b.data, (a, b), backward)


def neg(a):
    def backward(g):
        a._accumulate(-g)

    return _make(-a.data, (a,), backward)


def mul(a, b):
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast("mul", a, b)

    def backward(g):
        if a.requires_grad:
            a._accumulate(_unbroadcast(g * b.data, a.shape))
        if b.requires_grad:
            b._accumulate(_unbroadcast(g * a.data, b.shape))

    return _make(a.data * b.data, (a, b), backward)


def scale(a, c: float):
    a = as_tensor(a)

    def backward(g):
        a._accumulate(g * c)

    return _make(a.data * a.data.dtype.type(c), (a,), backward)


def gelu(a):
    """Exact GELU, ``x * Phi(x)``."""
    x = a.data
    cdf = 0.5 * (1.0 + erf(x / _SQRT2))

    def backward(g):
        pdf = _INV_SQRT_2PI * np.exp(-0.5 * x * x)
        a._accumulate(g * (cdf + x * pdf))

    return _make(x * cdf, (a,), backward)


def masked_fill(a, mask, value):
    """Replace entries where ``mask`` is true by ``value``; no gradient flows there."""
    mask = np.asarray(mask, dtype=bool)
    try:
        np.broadcast_shapes(mask.shape, a.shape)
    except ValueError:
        raise ShapeError(f"masked_fill: mask shape {mask.shape} vs tensor {a.shape}") from None
    out = np.where(mask, a.data.dtype.type(value), a.data)
    keep = ~mask

    def backward(g):
        a._accumulate(_unbroadcast(g * keep, a.shape) if keep.shape != a.shape else g * keep)

    return _make(out, (a,), backward)


# ---------------------------------------------------------------------------
# shape ops

def reshape(a, shape):
    old = a.shape

    def backward(g):
        a._accumulate(g.reshape(old))

    try:
        data = a.data.reshape(shape)
    except ValueError:
        raise ShapeError(f"reshape: cannot reshape {old} into {shape}") from None
    return _make(data, (a,), backward)


def transpose(a, axes):
    axes = tuple(axes) if axes else tuple(reversed(range(a.ndim)))
    inv = tuple(np.argsort(axes))

    def backward(g):
        a._accumulate(g.transpose(inv))

    return _make(a.data.transpose(axes), (a,), backward)


def concat(tensors, axis=-1):
    """Concatenate along ``axis`` (the last by default)."""
    tensors = [as_tensor(t) for t in tensors]
    ax = axis % tensors[0].ndim
    for t in tensors[1:]:
        if t.ndim != tensors[0].ndim or any(
                s != r for i, (s, r) in enumerate(zip(t.shape, tensors[0].shape)) if i != ax):
            raise ShapeError(f"concat: incompatible shapes {tensors[0].shape} and {t.shape}")
    sizes = [t.shape[ax] for t in tensors]
    cuts = np.cumsum(sizes)[:-1]

    def backward(g):
        for t, piece in zip(tensors, np.split(g, cuts, axis=ax)):
            if t.requires_grad:
                t._accumulate(piece)

    return _make(np.concatenate([t.data for t in tensors], axis=ax), tensors, backward)


def gather_rows(a, index):
    """``a[index]`` along the first axis."""
    index = np.asarray(index, dtype=np.int64)

    def backward(g):
        full = np.zeros_like(a.data)
        np.add.at(full, index, g)
        a._accumulate(full)

    return _make(a.data[index], (a,), backward)


def segment_sum(a, segment_ids, n_segments):
    """Sum rows of ``a`` into ``n_segments`` buckets given by ``segment_ids``."""
    segment_ids = np.asarray(segment_ids, dtype=np.int64)
    if len(segment_ids) != a.shape[0]:
        raise ShapeError(f"segment_sum: {len(segment_ids)} ids for {a.shape[0]} rows")
    out = np.zeros((n_segments,) + a.shape[1:], dtype=a.dtype)
    np.add.at(out, segment_ids, a.data)

    def backward(g):
        a._accumulate(g[segment_ids])

    return _make(out, (a,), backward)


# ---------------------------------------------------------------------------
# reductions and linear algebra

def tsum(a, axis=None, keepdims=False):
    shape = a.shape

    def backward(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        a._accumulate(np.broadcast_to(g, shape))

    return _make(np.asarray(a.data.sum(axis=axis, keepdims=keepdims)), (a,), backward)


def mean(a, axis=None, keepdims=False):
    n = a.data.size if axis is None else np.prod([a.shape[i] for i in np.atleast_1d(axis)])
    return scale(tsum(a, axis, keepdims), 1.0 / n)


def matmul(a, b):
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim < 2 or b.ndim < 2 or a.shape[-1] != b.shape[-2]:
        raise ShapeError(f"matmul: incompatible shapes {a.shape} and {b.shape}")

    def backward(g):
        if a.requires_grad:
            a._accumulate(_unbroadcast(g @ np.swapaxes(b.data, -1, -2), a.shape))
        if b.requires_grad:
            b._accumulate(_unbroadcast(np.swapaxes(a.data, -1, -2) @ g, b.shape))

    try:
        out = a.data @ b.data
    except ValueError:
        raise ShapeError(f"matmul: incompatible shapes {a.shape} and {b.shape}") from None
    return _make(out, (a, b), backward)


def softmax(a, axis=-1):
    """Softmax along ``axis``; ``-inf`` entries receive exactly zero weight."""
    x = a.data
    m = np.max(x, axis=axis, keepdims=True)
    e = np.exp(x - m)
    y = e / e.sum(axis=axis, keepdims=True)

    def backward(g):
        a._accumulate(y * (g - np.sum(g * y, axis=axis, keepdims=True)))

    return _make(y, (a,), backward)


def layer_norm(a, gamma=None, beta=None, eps=1e-5):
    """Normalise over the last axis, then apply the optional affine map."""
    x = a.data
    mu = x.mean(axis=-1, keepdims=True)
    xc = x - mu
    var = np.mean(xc * xc, axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = xc * inv
    d = x.shape[-1]
    out = xhat
    if gamma is not None:
        if gamma.shape != (d,) or (beta is not None and beta.shape != (d,)):
            raise ShapeError(f"layer_norm: affine params must have shape ({d},)")
        out = xhat * gamma.data + (beta.data if beta is not None else 0.0)

    def backward(g):
        if gamma is not None and gamma.requires_grad:
            gamma._accumulate((g * xhat).reshape(-1, d).sum(axis=0))
        if beta is not None and beta.requires_grad:
            beta._accumulate(g.reshape(-1, d).sum(axis=0))
        if a.requires_grad:
            gh = g * gamma.data if gamma is not None else g
            gx = inv * (gh - gh.mean(axis=-1, keepdims=True)
                        - xhat * np.mean(gh * xhat, axis=-1, keepdims=True))
            a._accumulate(gx)

    parents = (a,) + tuple(p for p in (gamma, beta) if p is not None)
    return _make(out, parents, backward)


def mse_loss(pred, target, mask=None):
    """Mean squared error, averaged over entries where ``mask`` is true."""
    target = np.asarray(target.data if isinstance(target, Tensor) else target, dtype=pred.dtype)
    if pred.shape != target.shape:
        raise ShapeError(f"mse_loss: prediction {pred.shape} vs target {target.shape}")
    w = np.ones(pred.shape, dtype=pred.dtype) if mask is None else np.asarray(mask, dtype=pred.dtype)
    n = w.sum()
    if n == 0:
        raise ValueError("mse_loss: mask selects no entries")
    diff = (pred.data - target) * w
    out = np.asarray(np.sum(diff * diff) / n, dtype=pred.dtype)

    def backward(g):
        pred._accumulate(g * 2.0 * diff / n)

    return _make(out, (pred,), backward)


# ---------------------------------------------------------------------------
# attention

def multi_head_attention(x, wq, wk, wv, wo, bo=None, key_mask=None, n_heads=1,
                         return_weights=False):
    """Scaled dot-product self-attention over the second-to-last axis.

    ``x`` is ``(..., N, d)``; every projection matrix is ``(d, d)`` and each
    head works on a ``d / n_heads`` slice. ``key_mask`` (``(..., N)`` booleans,
    true = attendable) removes keys from every query's softmax.
    """
    d = x.shape[-1]
    if d % n_heads:
        raise ShapeError(f"hidden size {d} not divisible by {n_heads} heads")
    for w in (wq, wk, wv, wo):
        if w.shape != (d, d):
            raise ShapeError(f"projection shape {w.shape} does not match hidden size {d}")
    dk = d // n_heads
    lead = x.shape[:-2]
    n = x.shape[-2]

    def heads(t):
        t = reshape(t, lead + (n, n_heads, dk))
        perm = tuple(range(len(lead))) + (len(lead) + 1, len(lead), len(lead) + 2)
        return transpose(t, perm)

    q, k, v = heads(x @ wq), heads(x @ wk), heads(x @ wv)
    kt = transpose(k, tuple(range(len(lead) + 1)) + (len(lead) + 2, len(lead) + 1))
    scores = scale(q @ kt, 1.0 / math.sqrt(dk))
    if key_mask is not None:
        key_mask = np.asarray(key_mask, dtype=bool)
        if key_mask.shape != lead + (n,):
            raise ShapeError(f"key mask shape {key_mask.shape} vs expected {lead + (n,)}")
        if not key_mask.any(axis=-1).all():
            raise ValueError("attention mask leaves a query row with no attendable keys")
        blocked = ~key_mask[..., None, None, :]
        scores = masked_fill(scores, blocked, -np.inf)
    weights = softmax(scores, axis=-1)
    ctx = weights @ v
    perm = tuple(range(len(lead))) + (len(lead) + 1, len(lead), len(lead) + 2)
    ctx = reshape(transpose(ctx, perm), lead + (n, d))
    out = ctx @ wo
    if bo is not None:
        out = out + bo
    if return_weights:
        return out, weights.data
    return out


# ---------------------------------------------------------------------------
# gradient checking

def grad_check(f, params, eps=1e-5, max_entries=None, seed=0):
    """Largest relative error between reverse-mode and central-difference gradients.

    ``f`` is a zero-argument callable returning a scalar :class:`Tensor` built
    from ``params``. The error for each parameter tensor is
    ``|g_ad - g_fd| / max(|g_ad|, |g_fd|)`` in the 2-norm; the maximum over
    tensors is returned. ``max_entries`` caps the number of coordinates
    perturbed per tensor (drawn at random with ``seed``); the norms are then
    taken over those coordinates only.
    """
    rng = np.random.default_rng(seed)
    for p in params:
        p.grad = None
        p.requires_grad = True
    out = f()
    out.backward()
    analytic = [np.zeros_like(p.data) if p.grad is None else p.grad.copy() for p in params]
    worst = 0.0
    for p, ga in zip(params, analytic):
        flat = p.data.reshape(-1)
        idx = np.arange(flat.size)
        if max_entries is not None and flat.size > max_entries:
            idx = np.sort(rng.choice(flat.size, max_entries, replace=False))
        ga = ga.reshape(-1)[idx]
        gn = np.zeros(len(idx))
        for j, i in enumerate(idx):
            orig = flat[i]
            flat[i] = orig + eps
            fp = float(f().data)
            flat[i] = orig - eps
            fm = float(f().data)
            flat[i] = orig
            gn[j] = (fp - fm) / (2 * eps)
        denom = max(np.linalg.norm(ga), np.linalg.norm(gn))
        if denom > 0:
            worst = max(worst, float(np.linalg.norm(ga - gn) / denom))
    return worst
