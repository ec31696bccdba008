"""Reverse-mode autodiff over the small set of tensor ops the model needs."""

import numpy as np


class ShapeError(ValueError):
    pass


class Tensor:
    """A numpy array plus the bookkeeping for reverse-mode differentiation.

    Non-leaf tensors record their parents and a closure that routes the
    upstream gradient to them. Gradients accumulate by summation, so fan-out
    is handled for free.
    """

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward")

    def __init__(self, data, requires_grad=False, _parents=()):
        arr = np.asarray(data)
        if not np.issubdtype(arr.dtype, np.floating):
            arr = arr.astype(np.float64)
        self.data = arr
        self.grad = None
        self.requires_grad = bool(requires_grad)
        self._parents = _parents
        self._backward = None

    @property
    def shape(self):
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    def item(self):
        return float(self.data)

    def detach(self):
        return Tensor(self.data.copy())

    def zero_grad(self):
        self.grad = None

    def backward(self):
        if self.data.size != 1:
            raise ValueError("backward requires a scalar loss node")
        self.grad = np.ones_like(self.data)
        for node in reversed(_topo_order(self)):
            # grad stays None on branches no gradient reached (e.g. the
            # codeword lookup behind a pass-through); nothing to push there
            if node._backward is not None and node.grad is not None:
                node._backward()

    def __add__(self, other):
        return add(self, _lift(other, self.dtype))

    def __radd__(self, other):
        return add(_lift(other, self.dtype), self)

    def __mul__(self, other):
        return mul(self, _lift(other, self.dtype))

    def __rmul__(self, other):
        return mul(_lift(other, self.dtype), self)

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, requires_grad={self.requires_grad})"


def _lift(x, dtype):
    if isinstance(x, Tensor):
        return x
    return Tensor(np.asarray(x, dtype=dtype))


def _topo_order(root):
    # Iterative postorder; training graphs are deep enough to overflow the
    # recursion limit.
    order = []
    visited = {id(root)}
    stack = [(root, iter(root._parents))]
    while stack:
        node, parents = stack[-1]
        advanced = False
        for p in parents:
            if id(p) not in visited:
                visited.add(id(p))
                stack.append((p, iter(p._parents)))
                advanced = True
                break
        if not advanced:
            order.append(node)
            stack.pop()
    return order


def _accumulate(t, g):
    if not t.requires_grad:
        return
    if t.grad is None:
        t.grad = np.zeros_like(t.data)
    t.grad += g


def _unbroadcast(g, shape):
    # Sum the gradient of a broadcast result back down to `shape`.
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for axis, n in enumerate(shape):
        if n == 1 and g.shape[axis] != 1:
            g = g.sum(axis=axis, keepdims=True)
    return g


def _make(data, parents, backward):
    out = Tensor(data, requires_grad=any(p.requires_grad for p in parents),
                 _parents=tuple(parents))
    if out.requires_grad:
        out._backward = backward(out)
    return out


def add(a, b):
    def bw(out):
        def run():
            _accumulate(a, _unbroadcast(out.grad, a.data.shape))
            _accumulate(b, _unbroadcast(out.grad, b.data.shape))
        return run
    return _make(a.data + b.data, (a, b), bw)


def mul(a, b):
    def bw(out):
        def run():
            _accumulate(a, _unbroadcast(out.grad * b.data, a.data.shape))
            _accumulate(b, _unbroadcast(out.grad * a.data, b.data.shape))
        return run
    return _make(a.data * b.data, (a, b), bw)


def matmul(a, b):
    if a.data.ndim != 2 or b.data.ndim != 2 or a.data.shape[1] != b.data.shape[0]:
        raise ShapeError(f"matmul shapes do not conform: {a.data.shape} @ {b.data.shape}")

    def bw(out):
        def run():
            _accumulate(a, out.grad @ b.data.T)
            _accumulate(b, a.data.T @ out.grad)
        return run
    return _make(a.data @ b.data, (a, b), bw)


def relu(x):
    def bw(out):
        def run():
            _accumulate(x, out.grad * (out.data > 0))
        return run
    return _make(np.maximum(x.data, 0), (x,), bw)


def transpose(x):
    if x.data.ndim != 2:
        raise ShapeError("transpose expects a 2-D tensor")

    def bw(out):
        def run():
            _accumulate(x, out.grad.T)
        return run
    return _make(x.data.T.copy(), (x,), bw)


def concat(tensors, axis=0):
    if not tensors:
        raise ValueError("concat of an empty sequence")
    sizes = [t.data.shape[axis] for t in tensors]
    offsets = np.cumsum([0] + sizes)

    def bw(out):
        def run():
            for t, lo, hi in zip(tensors, offsets[:-1], offsets[1:]):
                idx = [slice(None)] * out.grad.ndim
                idx[axis] = slice(lo, hi)
                _accumulate(t, out.grad[tuple(idx)])
        return run
    return _make(np.concatenate([t.data for t in tensors], axis=axis), tensors, bw)


def crop(x, length, axis=-1):
    axis = axis % x.data.ndim
    if length > x.data.shape[axis] or length < 1:
        raise ShapeError(f"cannot crop axis of size {x.data.shape[axis]} to {length}")
    idx = [slice(None)] * x.data.ndim
    idx[axis] = slice(0, length)
    idx = tuple(idx)

    def bw(out):
        def run():
            g = np.zeros_like(x.data)
            g[idx] = out.grad
            _accumulate(x, g)
        return run
    return _make(x.data[idx].copy(), (x,), bw)


def conv1d(x, k, stride=1, padding=0):
    """Cross-correlation of x (Cin, T) with kernels k (Cout, Cin, W)."""
    if x.data.ndim != 2 or k.data.ndim != 3:
        raise ShapeError("conv1d expects x (Cin, T) and k (Cout, Cin, W)")
    cin, t = x.data.shape
    cout, kcin, w = k.data.shape
    if kcin != cin:
        raise ShapeError(f"conv1d channel mismatch: x has {cin}, kernel expects {kcin}")
    if stride < 1 or padding < 0:
        raise ValueError("stride must be >= 1 and padding >= 0")
    t_out = (t + 2 * padding - w) // stride + 1
    if t_out < 1:
        raise ShapeError(f"conv1d output would be empty (T={t}, W={w}, pad={padding})")

    xp = np.pad(x.data, ((0, 0), (padding, padding))) if padding else x.data
    cols = np.empty((cin, w, t_out), dtype=x.data.dtype)
    for j in range(w):
        cols[:, j, :] = xp[:, j:j + stride * (t_out - 1) + 1:stride]
    y = np.einsum("oiw,iwt->ot", k.data, cols)

    def bw(out):
        def run():
            g = out.grad
            _accumulate(k, np.einsum("ot,iwt->oiw", g, cols))
            if x.requires_grad:
                dxp = np.zeros_like(xp)
                tmp = np.einsum("oiw,ot->iwt", k.data, g)
                for j in range(w):
                    dxp[:, j:j + stride * (t_out - 1) + 1:stride] += tmp[:, j, :]
                _accumulate(x, dxp[:, padding:padding + t] if padding else dxp)
        return run
    return _make(y, (x, k), bw)


def conv_transpose1d(x, k, stride=1, padding=0):
    """Transposed convolution of x (Cin, T) with kernels k (Cin, Cout, W)."""
    if x.data.ndim != 2 or k.data.ndim != 3:
        raise ShapeError("conv_transpose1d expects x (Cin, T) and k (Cin, Cout, W)")
    cin, t = x.data.shape
    kcin, cout, w = k.data.shape
    if kcin != cin:
        raise ShapeError(f"conv_transpose1d channel mismatch: x has {cin}, kernel expects {kcin}")
    if stride < 1 or padding < 0:
        raise ValueError("stride must be >= 1 and padding >= 0")
    t_full = (t - 1) * stride + w
    t_out = t_full - 2 * padding
    if t_out < 1:
        raise ShapeError("conv_transpose1d output would be empty")

    tmp = np.einsum("iow,it->owt", k.data, x.data)
    y_full = np.zeros((cout, t_full), dtype=x.data.dtype)
    for j in range(w):
        y_full[:, j:j + stride * (t - 1) + 1:stride] += tmp[:, j, :]
    y = y_full[:, padding:padding + t_out].copy() if padding else y_full

    def bw(out):
        def run():
            if padding:
                g_full = np.zeros((cout, t_full), dtype=out.grad.dtype)
                g_full[:, padding:padding + t_out] = out.grad
            else:
                g_full = out.grad
            cols = np.empty((cout, w, t), dtype=g_full.dtype)
            for j in range(w):
                cols[:, j, :] = g_full[:, j:j + stride * (t - 1) + 1:stride]
            _accumulate(x, np.einsum("iow,owt->it", k.data, cols))
            _accumulate(k, np.einsum("it,owt->iow", x.data, cols))
        return run
    return _make(y, (x, k), bw)


def embedding(table, indices):
    """Row lookup into table (K, D); returns (len(indices), D)."""
    idx = np.asarray(indices, dtype=np.int64)
    if idx.ndim != 1:
        raise ShapeError("embedding expects a 1-D index sequence")
    if table.data.ndim != 2:
        raise ShapeError("embedding table must be 2-D")
    if idx.size and (idx.min() < 0 or idx.max() >= table.data.shape[0]):
        raise IndexError("embedding index out of range")

    def bw(out):
        def run():
            g = np.zeros_like(table.data)
            np.add.at(g, idx, out.grad)
            _accumulate(table, g)
        return run
    return _make(table.data[idx], (table,), bw)


def straight_through(z, q):
    """Forward q, backward identity onto z; q receives no gradient."""
    if z.data.shape != q.data.shape:
        raise ShapeError(f"straight_through shape mismatch: {z.data.shape} vs {q.data.shape}")

    def bw(out):
        def run():
            _accumulate(z, out.grad)
        return run
    out = Tensor(q.data.copy(), requires_grad=z.requires_grad, _parents=(z, q))
    if out.requires_grad:
        out._backward = bw(out)
    return out


def tsum(x):
    def bw(out):
        def run():
            _accumulate(x, np.broadcast_to(out.grad, x.data.shape).astype(x.data.dtype))
        return run
    return _make(x.data.sum(), (x,), bw)


def mean(x):
    n = x.data.size

    def bw(out):
        def run():
            _accumulate(x, np.broadcast_to(out.grad / n, x.data.shape).astype(x.data.dtype))
        return run
    return _make(x.data.mean(), (x,), bw)


def squared_error(a, b, weight=None):
    """Mean of weight * (a - b)^2; weight defaults to all-ones."""
    if a.data.shape != b.data.shape:
        raise ShapeError(f"squared_error shape mismatch: {a.data.shape} vs {b.data.shape}")
    d = a.data - b.data
    if weight is None:
        y = np.mean(d * d)
        denom = d.size
        wd = d
    else:
        weight = np.asarray(weight, dtype=d.dtype)
        denom = weight.sum()
        if denom <= 0:
            raise ValueError("squared_error weights must have positive total mass")
        y = np.sum(weight * d * d) / denom
        wd = weight * d

    def bw(out):
        def run():
            common = out.grad * 2.0 * wd / denom
            _accumulate(a, common)
            _accumulate(b, -common)
        return run
    return _make(y, (a, b), bw)


def abs_error(a, b, weight=None):
    """Mean of weight * |a - b|; weight defaults to all-ones."""
    if a.data.shape != b.data.shape:
        raise ShapeError(f"abs_error shape mismatch: {a.data.shape} vs {b.data.shape}")
    d = a.data - b.data
    if weight is None:
        y = np.mean(np.abs(d))
        denom = d.size
        ws = np.sign(d)
    else:
        weight = np.asarray(weight, dtype=d.dtype)
        denom = weight.sum()
        if denom <= 0:
            raise ValueError("abs_error weights must have positive total mass")
        y = np.sum(weight * np.abs(d)) / denom
        ws = weight * np.sign(d)

    def bw(out):
        def run():
            common = out.grad * ws / denom
            _accumulate(a, common)
            _accumulate(b, -common)
        return run
    return _make(y, (a, b), bw)
