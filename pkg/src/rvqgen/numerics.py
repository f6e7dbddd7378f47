"""Dense tensors with a reverse-mode tape and a decoupled-weight-decay Adam.

Everything trainable in this package runs on top of this module. Tensors wrap
row-major numpy buffers (float32 by default); each op records its inputs and a
backward closure, and the tape is rebuilt on every forward pass — calling
``backward()`` on a scalar loss walks the graph once and frees with it.

Shape discipline is strict: elementwise ops require equal shapes, except that
``+`` accepts a lower-rank operand whose shape equals the trailing axes of the
other (bias add, additive masks). There is no other implicit broadcasting.
"""

from __future__ import annotations

import contextlib
import math

import numpy as np

DEFAULT_DTYPE = np.float32

_GRAD_ENABLED = True


@contextlib.contextmanager
def no_grad():
    """Disable tape recording inside the block (used for sampling/eval)."""
    global _GRAD_ENABLED
    prev = _GRAD_ENABLED
    _GRAD_ENABLED = False
    try:
        yield
    finally:
        _GRAD_ENABLED = prev


def _as_array(data, dtype=None):
    if dtype is not None:
        return np.asarray(data, dtype=dtype)
    if isinstance(data, (np.ndarray, np.generic)) and data.dtype in (np.float32, np.float64):
        return np.asarray(data)  # keep dtype; wraps numpy scalars as 0-d arrays
    return np.asarray(data, dtype=DEFAULT_DTYPE)


class Tensor:
    """Immutable-by-convention array node. ``data`` must not be mutated after
    construction except for optimizer updates on leaf Parameters."""

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward_fn")

    def __init__(self, data, requires_grad=False, parents=(), backward_fn=None, dtype=None):
        self.data = _as_array(data, dtype)
        self.grad = None
        self.requires_grad = bool(requires_grad) and _GRAD_ENABLED
        self._parents = parents if self.requires_grad else ()
        self._backward_fn = backward_fn if self.requires_grad else None

    # -- basic introspection ------------------------------------------------

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def size(self):
        return self.data.size

    @property
    def dtype(self):
        return self.data.dtype

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, dtype={self.data.dtype}, requires_grad={self.requires_grad})"

    def item(self):
        return float(self.data)

    def detach(self):
        return Tensor(self.data)

    # -- autograd core ------------------------------------------------------

    def _accumulate(self, g):
        if self.grad is None:
            self.grad = np.zeros_like(self.data)
        self.grad += g

    def backward(self):
        """Reverse-mode sweep from a scalar node into every reachable leaf."""
        if self.data.size != 1:
            raise ValueError(f"backward() requires a scalar node, got shape {self.data.shape}")
        # Iterative topological order (graphs are deep for long sequences).
        order = []
        visited = set()
        stack = [(self, False)]
        while stack:
            node, processed = stack.pop()
            if processed:
                order.append(node)
                continue
            if id(node) in visited:
                continue
            visited.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                if p.requires_grad and id(p) not in visited:
                    stack.append((p, False))
        self._accumulate(np.ones_like(self.data))
        for node in reversed(order):
            if node._backward_fn is not None:
                node._backward_fn(node.grad)

    # -- arithmetic ---------------------------------------------------------

    def __add__(self, other):
        if isinstance(other, (int, float)):
            out = Tensor(self.data + other, self.requires_grad, (self,))
            if out.requires_grad:
                out._backward_fn = lambda g: self._accumulate(g)
            return out
        a, b = self, other
        if a.shape != b.shape:
            # trailing-axis add: the lower-rank side must match the trailing axes
            lo, hi = (a, b) if a.ndim < b.ndim else (b, a)
            if lo.shape != hi.shape[hi.ndim - lo.ndim:]:
                raise ValueError(f"add shape mismatch: {a.shape} vs {b.shape}")
        out = Tensor(a.data + b.data, a.requires_grad or b.requires_grad, (a, b))
        if out.requires_grad:
            def _bwd(g):
                if a.requires_grad:
                    a._accumulate(_reduce_to(g, a.shape))
                if b.requires_grad:
                    b._accumulate(_reduce_to(g, b.shape))
            out._backward_fn = _bwd
        return out

    __radd__ = __add__

    def __neg__(self):
        out = Tensor(-self.data, self.requires_grad, (self,))
        if out.requires_grad:
            out._backward_fn = lambda g: self._accumulate(-g)
        return out

    def __sub__(self, other):
        return self + (-other)

    def __mul__(self, other):
        if isinstance(other, (int, float)):
            c = other
            out = Tensor(self.data * c, self.requires_grad, (self,))
            if out.requires_grad:
                out._backward_fn = lambda g: self._accumulate(g * c)
            return out
        a, b = self, other
        if a.shape != b.shape:
            raise ValueError(f"mul shape mismatch: {a.shape} vs {b.shape}")
        out = Tensor(a.data * b.data, a.requires_grad or b.requires_grad, (a, b))
        if out.requires_grad:
            def _bwd(g):
                if a.requires_grad:
                    a._accumulate(g * b.data)
                if b.requires_grad:
                    b._accumulate(g * a.data)
            out._backward_fn = _bwd
        return out

    __rmul__ = __mul__

    def __truediv__(self, other):
        if isinstance(other, (int, float)):
            return self * (1.0 / other)
        raise TypeError("tensor/tensor division is not part of the op set")

    def __matmul__(self, other):
        return matmul(self, other)

    # -- shape ops ------------------------------------------------------------

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        src = self.shape
        out = Tensor(self.data.reshape(shape), self.requires_grad, (self,))
        if out.requires_grad:
            out._backward_fn = lambda g: self._accumulate(g.reshape(src))
        return out

    def swapaxes(self, ax1, ax2):
        out = Tensor(self.data.swapaxes(ax1, ax2), self.requires_grad, (self,))
        if out.requires_grad:
            out._backward_fn = lambda g: self._accumulate(g.swapaxes(ax1, ax2))
        return out

    def __getitem__(self, key):
        out = Tensor(self.data[key], self.requires_grad, (self,))
        if out.requires_grad:
            def _bwd(g):
                full = np.zeros_like(self.data)
                full[key] = g
                self._accumulate(full)
            out._backward_fn = _bwd
        return out

    # -- reductions -----------------------------------------------------------

    def sum(self, axis=None, keepdims=False):
        out = Tensor(self.data.sum(axis=axis, keepdims=keepdims), self.requires_grad, (self,))
        if out.requires_grad:
            src = self.shape

            def _bwd(g):
                if axis is None:
                    self._accumulate(np.broadcast_to(g, src).copy())
                    return
                ge = g if keepdims else np.expand_dims(g, axis)
                self._accumulate(np.broadcast_to(ge, src).copy())
            out._backward_fn = _bwd
        return out

    def mean(self, axis=None, keepdims=False):
        n = self.size if axis is None else (
            math.prod(self.shape[a] for a in (axis if isinstance(axis, tuple) else (axis,)))
        )
        return self.sum(axis=axis, keepdims=keepdims) * (1.0 / n)

    # -- nonlinearities ---------------------------------------------------------

    def relu(self):
        out = Tensor(np.maximum(self.data, 0), self.requires_grad, (self,))
        if out.requires_grad:
            out._backward_fn = lambda g: self._accumulate(g * (self.data > 0))
        return out

    def tanh(self):
        t = np.tanh(self.data)
        out = Tensor(t, self.requires_grad, (self,))
        if out.requires_grad:
            out._backward_fn = lambda g: self._accumulate(g * (1.0 - t * t))
        return out

    def gelu(self):
        # tanh approximation; the derivative below matches it exactly
        x = self.data
        c = math.sqrt(2.0 / math.pi)
        u = c * (x + 0.044715 * x ** 3)
        t = np.tanh(u)
        out = Tensor(0.5 * x * (1.0 + t), self.requires_grad, (self,))
        if out.requires_grad:
            def _bwd(g):
                du = c * (1.0 + 3 * 0.044715 * x ** 2)
                d = 0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * du
                self._accumulate(g * d.astype(x.dtype))
            out._backward_fn = _bwd
        return out

    def exp(self):
        e = np.exp(self.data)
        out = Tensor(e, self.requires_grad, (self,))
        if out.requires_grad:
            out._backward_fn = lambda g: self._accumulate(g * e)
        return out

    def log(self):
        out = Tensor(np.log(self.data), self.requires_grad, (self,))
        if out.requires_grad:
            out._backward_fn = lambda g: self._accumulate(g / self.data)
        return out


def _reduce_to(g, shape):
    """Sum gradient g down to `shape` (inverse of trailing-axis broadcast)."""
    if g.shape == shape:
        return g
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    return g


# ---------------------------------------------------------------------------
# free-function ops
# ---------------------------------------------------------------------------


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """np.matmul semantics, restricted to equal batch dims or a 2-D right side."""
    if b.ndim > 2 and a.shape[:-2] != b.shape[:-2]:
        raise ValueError(f"matmul batch mismatch: {a.shape} vs {b.shape}")
    out = Tensor(np.matmul(a.data, b.data), a.requires_grad or b.requires_grad, (a, b))
    if out.requires_grad:
        def _bwd(g):
            if a.requires_grad:
                a._accumulate(np.matmul(g, b.data.swapaxes(-1, -2)))
            if b.requires_grad:
                if b.ndim == 2 and a.ndim > 2:
                    gb = np.matmul(
                        a.data.reshape(-1, a.shape[-1]).T, g.reshape(-1, g.shape[-1])
                    )
                else:
                    gb = np.matmul(a.data.swapaxes(-1, -2), g)
                b._accumulate(gb)
        out._backward_fn = _bwd
    return out


def concat(tensors, axis: int) -> Tensor:
    datas = [t.data for t in tensors]
    req = any(t.requires_grad for t in tensors)
    out = Tensor(np.concatenate(datas, axis=axis), req, tuple(tensors))
    if out.requires_grad:
        sizes = [d.shape[axis] for d in datas]

        def _bwd(g):
            start = 0
            for t, n in zip(tensors, sizes):
                if t.requires_grad:
                    sl = [slice(None)] * g.ndim
                    sl[axis] = slice(start, start + n)
                    t._accumulate(g[tuple(sl)])
                start += n
        out._backward_fn = _bwd
    return out


def embedding(table: Tensor, ids: np.ndarray) -> Tensor:
    """Row gather table[ids] with scatter-add backward."""
    ids = np.asarray(ids)
    if ids.size and (ids.min() < 0 or ids.max() >= table.shape[0]):
        raise IndexError(f"embedding id out of range [0, {table.shape[0]})")
    out = Tensor(table.data[ids], table.requires_grad, (table,))
    if out.requires_grad:
        def _bwd(g):
            gt = np.zeros_like(table.data)
            np.add.at(gt, ids.reshape(-1), g.reshape(-1, table.shape[-1]))
            table._accumulate(gt)
        out._backward_fn = _bwd
    return out


def gather_rows(x: Tensor, idx: np.ndarray) -> Tensor:
    """x (N, V), idx (N,) -> (N,) picking x[i, idx[i]]."""
    idx = np.asarray(idx)
    rows = np.arange(x.shape[0])
    out = Tensor(x.data[rows, idx], x.requires_grad, (x,))
    if out.requires_grad:
        def _bwd(g):
            gx = np.zeros_like(x.data)
            gx[rows, idx] = g
            x._accumulate(gx)
        out._backward_fn = _bwd
    return out


def softmax(x: Tensor, axis: int = -1) -> Tensor:
    """Shift-invariant softmax along `axis`; rejects non-finite input."""
    if not np.isfinite(x.data).all():
        raise ValueError("softmax: non-finite input")
    m = x.data.max(axis=axis, keepdims=True)
    e = np.exp(x.data - m)
    y = e / e.sum(axis=axis, keepdims=True)
    out = Tensor(y, x.requires_grad, (x,))
    if out.requires_grad:
        def _bwd(g):
            dot = (g * y).sum(axis=axis, keepdims=True)
            x._accumulate(y * (g - dot))
        out._backward_fn = _bwd
    return out


def masked_softmax(x: Tensor, mask: np.ndarray, axis: int = -1) -> Tensor:
    """Softmax over `axis` with an additive mask (0 where allowed, -inf where
    forbidden). Masked positions produce exact zeros, so outputs are invariant
    to the values they would have attended to."""
    z = x.data + mask
    m = z.max(axis=axis, keepdims=True)
    e = np.exp(z - m)
    y = e / e.sum(axis=axis, keepdims=True)
    out = Tensor(y, x.requires_grad, (x,))
    if out.requires_grad:
        def _bwd(g):
            dot = (g * y).sum(axis=axis, keepdims=True)
            x._accumulate(y * (g - dot))
        out._backward_fn = _bwd
    return out


def log_softmax(x: Tensor, axis: int = -1) -> Tensor:
    if not np.isfinite(x.data).all():
        raise ValueError("log_softmax: non-finite input")
    m = x.data.max(axis=axis, keepdims=True)
    s = x.data - m
    ls = s - np.log(np.exp(s).sum(axis=axis, keepdims=True))
    out = Tensor(ls, x.requires_grad, (x,))
    if out.requires_grad:
        def _bwd(g):
            p = np.exp(ls)
            x._accumulate(g - p * g.sum(axis=axis, keepdims=True))
        out._backward_fn = _bwd
    return out


def cross_entropy(logits: Tensor, target) -> Tensor:
    """-log softmax(logits)[target]. Accepts a single class index with 1-D
    logits, or an (N,) index array with (N, V) logits (mean over N)."""
    if logits.ndim == 1:
        t = int(target)
        if not 0 <= t < logits.shape[0]:
            raise IndexError(f"target {t} out of range [0, {logits.shape[0]})")
        ls = log_softmax(logits, axis=0)
        return -ls[t]
    targets = np.asarray(target)
    if targets.ndim != 1 or logits.ndim != 2 or targets.shape[0] != logits.shape[0]:
        raise ValueError(f"cross_entropy shapes: logits {logits.shape}, targets {targets.shape}")
    if targets.size and (targets.min() < 0 or targets.max() >= logits.shape[1]):
        raise IndexError(f"target out of range [0, {logits.shape[1]})")
    ls = log_softmax(logits, axis=1)
    return -gather_rows(ls, targets).mean()


def layer_norm(x: Tensor, gain: Tensor, bias: Tensor, eps: float = 1e-5) -> Tensor:
    """Normalize the last axis to zero mean / unit variance, then scale+shift."""
    mu = x.data.mean(axis=-1, keepdims=True)
    var = x.data.var(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = (x.data - mu) * inv
    out = Tensor(xhat * gain.data + bias.data, x.requires_grad or gain.requires_grad or bias.requires_grad, (x, gain, bias))
    if out.requires_grad:
        n = x.shape[-1]

        def _bwd(g):
            if gain.requires_grad:
                gain._accumulate((g * xhat).reshape(-1, n).sum(axis=0))
            if bias.requires_grad:
                bias._accumulate(g.reshape(-1, n).sum(axis=0))
            if x.requires_grad:
                gy = g * gain.data
                m1 = gy.mean(axis=-1, keepdims=True)
                m2 = (gy * xhat).mean(axis=-1, keepdims=True)
                x._accumulate(inv * (gy - m1 - xhat * m2))
        out._backward_fn = _bwd
    return out


def conv1d(x: Tensor, w: Tensor, b: Tensor, stride: int, padding: int) -> Tensor:
    """x (B, Cin, L), w (Cout, Cin, k), b (Cout,) -> (B, Cout, Lout)."""
    B, Ci, L = x.shape
    Co, Ci2, k = w.shape
    assert Ci == Ci2, (Ci, Ci2)
    xp = np.pad(x.data, ((0, 0), (0, 0), (padding, padding)))
    Lo = (L + 2 * padding - k) // stride + 1
    # gather (B, Lo, Ci, k) windows; contiguous copy so matmul is fast
    s0, s1, s2 = xp.strides
    cols = np.lib.stride_tricks.as_strided(
        xp, shape=(B, Lo, Ci, k), strides=(s0, s2 * stride, s1, s2), writeable=False
    ).reshape(B * Lo, Ci * k)
    cols = np.ascontiguousarray(cols)
    wmat = w.data.reshape(Co, Ci * k)
    y = (cols @ wmat.T).reshape(B, Lo, Co) + b.data
    out = Tensor(np.ascontiguousarray(y.transpose(0, 2, 1)),
                 x.requires_grad or w.requires_grad or b.requires_grad, (x, w, b))
    if out.requires_grad:
        def _bwd(g):
            g2 = np.ascontiguousarray(g.transpose(0, 2, 1)).reshape(B * Lo, Co)
            if b.requires_grad:
                b._accumulate(g2.sum(axis=0))
            if w.requires_grad:
                w._accumulate((g2.T @ cols).reshape(Co, Ci, k))
            if x.requires_grad:
                dcols = (g2 @ wmat).reshape(B, Lo, Ci, k)
                dxp = np.zeros_like(xp)
                for j in range(k):
                    dxp[:, :, j: j + stride * Lo: stride] += dcols[:, :, :, j].transpose(0, 2, 1)
                x._accumulate(dxp[:, :, padding: padding + L] if padding else dxp)
        out._backward_fn = _bwd
    return out


def conv_transpose1d(x: Tensor, w: Tensor, b: Tensor, stride: int, padding: int) -> Tensor:
    """x (B, Cin, L), w (Cin, Cout, k), b (Cout,) -> (B, Cout, (L-1)*stride + k - 2*padding)."""
    B, Ci, L = x.shape
    Ci2, Co, k = w.shape
    assert Ci == Ci2, (Ci, Ci2)
    full = (L - 1) * stride + k
    Lo = full - 2 * padding
    xt = np.ascontiguousarray(x.data.transpose(0, 2, 1))  # (B, L, Ci)
    yf = np.zeros((B, Co, full), dtype=x.dtype)
    for j in range(k):
        contrib = xt @ w.data[:, :, j]  # (B, L, Co)
        yf[:, :, j: j + stride * (L - 1) + 1: stride] += contrib.transpose(0, 2, 1)
    y = yf[:, :, padding: padding + Lo] + b.data[:, None]
    out = Tensor(y, x.requires_grad or w.requires_grad or b.requires_grad, (x, w, b))
    if out.requires_grad:
        def _bwd(g):
            gf = np.zeros((B, Co, full), dtype=g.dtype)
            gf[:, :, padding: padding + Lo] = g
            if b.requires_grad:
                b._accumulate(g.sum(axis=(0, 2)))
            dxt = np.zeros_like(xt) if x.requires_grad else None
            gw = np.empty_like(w.data) if w.requires_grad else None
            x2 = xt.reshape(B * L, Ci)
            for j in range(k):
                gj = gf[:, :, j: j + stride * (L - 1) + 1: stride]  # (B, Co, L)
                gjt = np.ascontiguousarray(gj.transpose(0, 2, 1))   # (B, L, Co)
                if w.requires_grad:
                    gw[:, :, j] = x2.T @ gjt.reshape(B * L, Co)
                if x.requires_grad:
                    dxt += gjt @ w.data[:, :, j].T
            if w.requires_grad:
                w._accumulate(gw)
            if x.requires_grad:
                x._accumulate(dxt.transpose(0, 2, 1))
        out._backward_fn = _bwd
    return out


def mse(a: Tensor, b: Tensor) -> Tensor:
    d = a - b
    return (d * d).mean()


# ---------------------------------------------------------------------------
# parameters, modules, optimizer
# ---------------------------------------------------------------------------


class Parameter(Tensor):
    """Trainable leaf tensor with a unique name within its owning module."""

    __slots__ = ("name",)

    def __init__(self, data, name: str, dtype=None):
        super().__init__(data, requires_grad=True, dtype=dtype)
        # Parameters must stay trainable even if constructed under no_grad.
        self.requires_grad = True
        self.name = name


class ParamModule:
    """Minimal parameter container: registration, state export/import."""

    def __init__(self):
        self._params: dict[str, Parameter] = {}

    def param(self, name: str, data) -> Parameter:
        if name in self._params:
            raise ValueError(f"duplicate parameter name: {name}")
        p = Parameter(data, name)
        self._params[name] = p
        return p

    def parameters(self) -> dict[str, Parameter]:
        return dict(self._params)

    def zero_grad(self):
        for p in self._params.values():
            p.grad = None

    def state_arrays(self) -> dict[str, np.ndarray]:
        return {k: p.data.copy() for k, p in self._params.items()}

    def load_state(self, arrays: dict[str, np.ndarray]):
        missing = set(self._params) - set(arrays)
        extra = set(arrays) - set(self._params)
        if missing or extra:
            raise KeyError(f"parameter name mismatch: missing={sorted(missing)} extra={sorted(extra)}")
        for k, p in self._params.items():
            a = np.asarray(arrays[k], dtype=p.dtype)
            if a.shape != p.shape:
                raise ValueError(f"{k}: shape {a.shape} != {p.shape}")
            p.data = a.copy()


class AdamW:
    """Adam with decoupled multiplicative weight decay and bias correction."""

    def __init__(self, params, lr=1e-3, betas=(0.9, 0.999), eps=1e-8, weight_decay=0.0):
        if isinstance(params, dict):
            params = list(params.values())
        self.params = list(params)
        self.lr = lr
        self.beta1, self.beta2 = betas
        self.eps = eps
        self.weight_decay = weight_decay
        self.t = 0
        self._m = [np.zeros_like(p.data) for p in self.params]
        self._v = [np.zeros_like(p.data) for p in self.params]

    def zero_grad(self):
        for p in self.params:
            p.grad = None

    def step(self):
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        c1 = 1.0 - b1 ** self.t
        c2 = 1.0 - b2 ** self.t
        for p, m, v in zip(self.params, self._m, self._v):
            g = p.grad
            if g is None:
                continue
            if self.weight_decay:
                p.data *= 1.0 - self.lr * self.weight_decay
            m *= b1
            m += (1.0 - b1) * g
            v *= b2
            v += (1.0 - b2) * (g * g)
            p.data -= (self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)).astype(p.dtype)


def normal_init(rng: np.random.Generator, shape, std=0.02):
    return (rng.standard_normal(shape) * std).astype(DEFAULT_DTYPE)
