"""Reverse-mode automatic differentiation over dense float64 tensors, plus
the Adam optimizer.

Every op records its inputs and an adjoint closure on the output tensor; a
backward pass topologically sorts the recorded graph and visits each op once,
accumulating exact adjoints into .grad. Randomness never originates here:
stochastic ops (gaussian_sample) take their noise as an explicit input.
"""

from __future__ import annotations

import numpy as np


class ShapeMismatch(ValueError):
    def __init__(self, op, *shapes):
        super().__init__(f"{op}: incompatible shapes {' vs '.join(str(s) for s in shapes)}")


class Tensor:
    """Dense float64 tensor participating in reverse-mode differentiation."""

    __slots__ = ("values", "grad", "requires_grad", "_parents", "_backward")

    def __init__(self, values, requires_grad=False, _parents=(), _backward=None):
        self.values = np.asarray(values, dtype=np.float64)
        self.grad = None
        self.requires_grad = bool(requires_grad)
        self._parents = _parents
        self._backward = _backward

    @property
    def shape(self):
        return self.values.shape

    def detach(self):
        """A view of the values cut off from the recorded graph."""
        return Tensor(self.values)

    def item(self):
        return float(self.values)

    def _accumulate(self, g):
        if self.grad is None:
            self.grad = np.array(g, dtype=np.float64)
        else:
            self.grad += g

    def backward(self, seed_grad=None):
        """Propagate adjoints from this tensor back to every ancestor.

        Visits each recorded op exactly once in reverse topological order.
        Forward values are never mutated.
        """
        if seed_grad is None:
            if self.values.size != 1:
                raise ValueError("backward() without a seed gradient needs a scalar output")
            seed_grad = np.ones_like(self.values)
        order = []
        visited = set()
        stack = [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                order.append(node)
                continue
            if id(node) in visited:
                continue
            visited.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                if id(p) not in visited:
                    stack.append((p, False))
        self._accumulate(np.asarray(seed_grad, dtype=np.float64))
        for node in reversed(order):
            if node._backward is not None and node.grad is not None:
                node._backward(node.grad)

    def __repr__(self):
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad})"


def as_tensor(x):
    return x if isinstance(x, Tensor) else Tensor(x)


def constant(values):
    """A tensor that never receives gradients."""
    return Tensor(values)


def _unite(*parents):
    return tuple(p for p in parents if isinstance(p, Tensor))


def matmul(a, b):
    a, b = as_tensor(a), as_tensor(b)
    if a.values.ndim != 2 or b.values.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ShapeMismatch("matmul", a.shape, b.shape)
    out = Tensor(a.values @ b.values, _parents=_unite(a, b))

    def backward(g):
        a._accumulate(g @ b.values.T)
        b._accumulate(a.values.T @ g)

    out._backward = backward
    return out


def add(a, b):
    """Elementwise addition; b may be a (1, n) or (n,) row bias."""
    a, b = as_tensor(a), as_tensor(b)
    bv = b.values
    row_bias = bv.ndim <= 1 or (bv.ndim == 2 and bv.shape[0] == 1 and a.shape[0] != 1)
    if a.shape != b.shape and not (row_bias and a.shape[-1] == bv.shape[-1]):
        raise ShapeMismatch("add", a.shape, b.shape)
    out = Tensor(a.values + bv, _parents=_unite(a, b))

    def backward(g):
        a._accumulate(g)
        if b.shape == a.shape:
            b._accumulate(g)
        else:
            b._accumulate(g.sum(axis=0, keepdims=bv.ndim == 2))

    out._backward = backward
    return out


def sub(a, b):
    return add(a, scale(b, -1.0))


def mul(a, b):
    """Elementwise product; (n, 1) or (1, n) operands broadcast."""
    a, b = as_tensor(a), as_tensor(b)
    try:
        values = a.values * b.values
    except ValueError:
        raise ShapeMismatch("mul", a.shape, b.shape) from None
    out = Tensor(values, _parents=_unite(a, b))

    def _reduce_to(g, shape):
        if g.shape == shape:
            return g
        axes = tuple(i for i, (gs, ss) in enumerate(zip(g.shape, shape)) if ss == 1 and gs != 1)
        return g.sum(axis=axes, keepdims=True)

    def backward(g):
        a._accumulate(_reduce_to(g * b.values, a.values.shape))
        b._accumulate(_reduce_to(g * a.values, b.values.shape))

    out._backward = backward
    return out


def scale(a, k):
    a = as_tensor(a)
    k = float(k)
    out = Tensor(a.values * k, _parents=_unite(a))
    out._backward = lambda g: a._accumulate(g * k)
    return out


def add_const(a, k):
    a = as_tensor(a)
    out = Tensor(a.values + float(k), _parents=_unite(a))
    out._backward = lambda g: a._accumulate(g)
    return out


def exp(a):
    a = as_tensor(a)
    ev = np.exp(a.values)
    out = Tensor(ev, _parents=_unite(a))
    out._backward = lambda g: a._accumulate(g * ev)
    return out


def clip(a, lo, hi):
    """Clamp values to [lo, hi]; gradient passes through inside the range."""
    a = as_tensor(a)
    inside = (a.values >= lo) & (a.values <= hi)
    out = Tensor(np.clip(a.values, lo, hi), _parents=_unite(a))
    out._backward = lambda g: a._accumulate(g * inside)
    return out


def log(a):
    a = as_tensor(a)
    out = Tensor(np.log(a.values), _parents=_unite(a))
    out._backward = lambda g: a._accumulate(g / a.values)
    return out


def softplus(a):
    """log(1 + e^x), computed stably; the safe building block for GAN losses."""
    a = as_tensor(a)
    v = a.values
    values = np.maximum(v, 0.0) + np.log1p(np.exp(-np.abs(v)))
    out = Tensor(values, _parents=_unite(a))

    def backward(g):
        a._accumulate(g / (1.0 + np.exp(-v)))

    out._backward = backward
    return out


def concat(tensors, axis):
    tensors = [as_tensor(t) for t in tensors]
    out = Tensor(np.concatenate([t.values for t in tensors], axis=axis),
                 _parents=_unite(*tensors))
    sizes = [t.shape[axis] for t in tensors]
    offsets = np.cumsum([0] + sizes)

    def backward(g):
        for t, start, stop in zip(tensors, offsets[:-1], offsets[1:]):
            idx = [slice(None)] * g.ndim
            idx[axis] = slice(start, stop)
            t._accumulate(g[tuple(idx)])

    out._backward = backward
    return out


def slice2d(a, rows=slice(None), cols=slice(None)):
    a = as_tensor(a)
    out = Tensor(a.values[rows, cols], _parents=_unite(a))

    def backward(g):
        buf = np.zeros_like(a.values)
        buf[rows, cols] = g
        a._accumulate(buf)

    out._backward = backward
    return out


def slice_cols(a, start, stop):
    return slice2d(a, cols=slice(start, stop))


def embedding_lookup(table, indices):
    """Gather rows of a (num, width) table by integer index; the adjoint
    scatter-adds back into the table rows."""
    table = as_tensor(table)
    idx = np.asarray(indices, dtype=np.int64)
    if idx.ndim != 1:
        raise ShapeMismatch("embedding_lookup", idx.shape)
    if table.values.ndim != 2:
        raise ShapeMismatch("embedding_lookup", table.shape)
    if idx.size and (idx.min() < 0 or idx.max() >= table.shape[0]):
        raise IndexError(f"embedding_lookup: index out of range for table of {table.shape[0]} rows")
    out = Tensor(table.values[idx], _parents=_unite(table))

    def backward(g):
        buf = np.zeros_like(table.values)
        np.add.at(buf, idx, g)
        table._accumulate(buf)

    out._backward = backward
    return out


def relu(a):
    a = as_tensor(a)
    mask = a.values > 0
    out = Tensor(np.where(mask, a.values, 0.0), _parents=_unite(a))
    out._backward = lambda g: a._accumulate(g * mask)
    return out


def leaky_relu(a, slope=0.2):
    a = as_tensor(a)
    factor = np.where(a.values > 0, 1.0, slope)
    out = Tensor(a.values * factor, _parents=_unite(a))
    out._backward = lambda g: a._accumulate(g * factor)
    return out


def sigmoid(a):
    a = as_tensor(a)
    s = 1.0 / (1.0 + np.exp(-a.values))
    out = Tensor(s, _parents=_unite(a))
    out._backward = lambda g: a._accumulate(g * s * (1.0 - s))
    return out


def softmax(a, axis=-1):
    a = as_tensor(a)
    shifted = a.values - a.values.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    s = e / e.sum(axis=axis, keepdims=True)
    out = Tensor(s, _parents=_unite(a))

    def backward(g):
        dot = (g * s).sum(axis=axis, keepdims=True)
        a._accumulate(s * (g - dot))

    out._backward = backward
    return out


def mean(a):
    a = as_tensor(a)
    n = a.values.size
    out = Tensor(np.array(a.values.mean()), _parents=_unite(a))
    out._backward = lambda g: a._accumulate(np.full_like(a.values, float(g) / n))
    return out


def sum_all(a):
    a = as_tensor(a)
    out = Tensor(np.array(a.values.sum()), _parents=_unite(a))
    out._backward = lambda g: a._accumulate(np.full_like(a.values, float(g)))
    return out


def l1_loss(pred, target):
    """Per-row L1 distance averaged over rows: mean_i sum_j |pred - target|."""
    pred, target = as_tensor(pred), as_tensor(target)
    if pred.shape != target.shape:
        raise ShapeMismatch("l1_loss", pred.shape, target.shape)
    diff = pred.values - target.values
    n_rows = pred.shape[0] if pred.values.ndim > 1 else 1
    out = Tensor(np.array(np.abs(diff).sum() / max(n_rows, 1)), _parents=_unite(pred, target))

    def backward(g):
        d = np.sign(diff) * (float(g) / max(n_rows, 1))
        pred._accumulate(d)
        target._accumulate(-d)

    out._backward = backward
    return out


def cross_entropy(logits, targets):
    """Mean over rows of -log softmax(logits)[target]."""
    logits = as_tensor(logits)
    idx = np.asarray(targets, dtype=np.int64)
    if logits.values.ndim != 2 or idx.shape != (logits.shape[0],):
        raise ShapeMismatch("cross_entropy", logits.shape, idx.shape)
    shifted = logits.values - logits.values.max(axis=1, keepdims=True)
    lse = np.log(np.exp(shifted).sum(axis=1))
    picked = shifted[np.arange(len(idx)), idx]
    n = len(idx)
    out = Tensor(np.array((lse - picked).mean()), _parents=_unite(logits))

    def backward(g):
        p = np.exp(shifted - lse[:, None])
        p[np.arange(n), idx] -= 1.0
        logits._accumulate(p * (float(g) / n))

    out._backward = backward
    return out


def gaussian_sample(mu, logvar, eps):
    """Reparameterized Gaussian sample z = mu + exp(logvar / 2) * eps; the
    noise eps is supplied by the caller, never drawn here."""
    mu, logvar, eps = as_tensor(mu), as_tensor(logvar), as_tensor(eps)
    if mu.shape != logvar.shape or mu.shape != eps.shape:
        raise ShapeMismatch("gaussian_sample", mu.shape, logvar.shape, eps.shape)
    std = np.exp(logvar.values / 2.0)
    out = Tensor(mu.values + std * eps.values, _parents=_unite(mu, logvar, eps))

    def backward(g):
        mu._accumulate(g)
        logvar._accumulate(g * 0.5 * std * eps.values)
        eps._accumulate(g * std)

    out._backward = backward
    return out


def masked_row_add(base, update, row_mask):
    """base + update on masked rows, base bit-identical elsewhere."""
    base, update = as_tensor(base), as_tensor(update)
    if base.shape != update.shape:
        raise ShapeMismatch("masked_row_add", base.shape, update.shape)
    mask = np.asarray(row_mask, dtype=bool)
    if mask.all():
        return add(base, update)
    values = base.values.copy()
    values[mask] = base.values[mask] + update.values[mask]
    out = Tensor(values, _parents=_unite(base, update))

    def backward(g):
        base._accumulate(g)
        gu = np.zeros_like(update.values)
        gu[mask] = g[mask]
        update._accumulate(gu)

    out._backward = backward
    return out


def where_rows(row_mask, a, b):
    """Row-wise select: a on masked rows, b elsewhere (both bit-exact)."""
    a, b = as_tensor(a), as_tensor(b)
    if a.shape != b.shape:
        raise ShapeMismatch("where_rows", a.shape, b.shape)
    mask = np.asarray(row_mask, dtype=bool)
    values = b.values.copy()
    values[mask] = a.values[mask]
    out = Tensor(values, _parents=_unite(a, b))

    def backward(g):
        ga = np.zeros_like(g)
        ga[mask] = g[mask]
        gb = g.copy()
        gb[mask] = 0.0
        a._accumulate(ga)
        b._accumulate(gb)

    out._backward = backward
    return out


class BatchNormState:
    """Running statistics buffer for one batch_norm site."""

    def __init__(self, width, momentum=0.9, eps=1e-5):
        self.running_mean = np.zeros(width)
        self.running_var = np.ones(width)
        self.momentum = momentum
        self.eps = eps


def batch_norm(x, gamma, beta, state, train):
    """Batch normalization over rows. Train mode normalizes with batch
    statistics and updates the running buffers (momentum 0.9); eval mode
    uses the running statistics."""
    x, gamma, beta = as_tensor(x), as_tensor(gamma), as_tensor(beta)
    if x.values.ndim != 2 or gamma.shape[-1] != x.shape[1] or beta.shape[-1] != x.shape[1]:
        raise ShapeMismatch("batch_norm", x.shape, gamma.shape, beta.shape)
    if train:
        mu = x.values.mean(axis=0)
        var = x.values.var(axis=0)
        state.running_mean = state.momentum * state.running_mean + (1 - state.momentum) * mu
        state.running_var = state.momentum * state.running_var + (1 - state.momentum) * var
    else:
        mu, var = state.running_mean, state.running_var
    inv_std = 1.0 / np.sqrt(var + state.eps)
    xhat = (x.values - mu) * inv_std
    out = Tensor(xhat * gamma.values + beta.values, _parents=_unite(x, gamma, beta))
    n = x.shape[0]

    def backward(g):
        gamma._accumulate((g * xhat).sum(axis=0, keepdims=gamma.values.ndim == 2))
        beta._accumulate(g.sum(axis=0, keepdims=beta.values.ndim == 2))
        gx = g * gamma.values.reshape(1, -1)
        if train:
            dxhat = gx
            x._accumulate(inv_std / n * (n * dxhat - dxhat.sum(axis=0)
                                         - xhat * (dxhat * xhat).sum(axis=0)))
        else:
            x._accumulate(gx * inv_std)

    out._backward = backward
    return out


def grad_check(f, x, eps=1e-5):
    """Max relative error between the backward gradient of the scalar f(x)
    and central finite differences over every component of x."""
    x.requires_grad = True
    x.grad = None
    out = f(x)
    if not np.all(np.isfinite(out.values)):
        raise ValueError("grad_check: function value is not finite")
    if out.values.size != 1:
        raise ValueError("grad_check: f must be scalar-valued")
    out.backward()
    analytic = np.zeros_like(x.values) if x.grad is None else x.grad.copy()

    worst = 0.0
    flat = x.values.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + eps
        hi = float(f(x).values)
        flat[i] = orig - eps
        lo = float(f(x).values)
        flat[i] = orig
        if not (np.isfinite(hi) and np.isfinite(lo)):
            raise ValueError("grad_check: function value is not finite")
        numeric = (hi - lo) / (2.0 * eps)
        a = analytic.reshape(-1)[i]
        err = abs(a - numeric) / max(1.0, abs(a), abs(numeric))
        worst = max(worst, err)
    return worst


class ParameterStore:
    """Named trainable tensors plus per-parameter Adam moments."""

    def __init__(self):
        self.params = {}
        self._m = {}
        self._v = {}
        self.t = 0

    def add(self, name, values):
        if name in self.params:
            raise ValueError(f"parameter {name!r} already registered")
        t = Tensor(np.asarray(values, dtype=np.float64), requires_grad=True)
        self.params[name] = t
        self._m[name] = np.zeros_like(t.values)
        self._v[name] = np.zeros_like(t.values)
        return t

    def __getitem__(self, name):
        return self.params[name]

    def __contains__(self, name):
        return name in self.params

    def names(self):
        return list(self.params)

    def zero_grad(self):
        for p in self.params.values():
            p.grad = None

    def ensure_grads(self):
        """Populate zero gradients for parameters the last backward pass
        never reached (e.g. an idle subnetwork)."""
        for p in self.params.values():
            if p.grad is None:
                p.grad = np.zeros_like(p.values)

    def num_values(self):
        return sum(p.values.size for p in self.params.values())

    def clip_grad_norm(self, max_norm):
        """Rescale all gradients so their global L2 norm is at most max_norm;
        returns the pre-clip norm."""
        total = 0.0
        for p in self.params.values():
            if p.grad is not None:
                total += float(np.sum(p.grad * p.grad))
        norm = float(np.sqrt(total))
        if norm > max_norm > 0:
            scale = max_norm / norm
            for p in self.params.values():
                if p.grad is not None:
                    p.grad *= scale
        return norm

    def adam_step(self, lr=0.001, beta1=0.9, beta2=0.999, eps=1e-8):
        """Bias-corrected Adam update over every parameter; gradients are
        cleared afterward."""
        for name, p in self.params.items():
            if p.grad is None:
                raise ValueError(f"adam_step: parameter {name!r} has no gradient")
        self.t += 1
        step = lr / (1.0 - beta1 ** self.t)
        inv_sqrt_c2 = 1.0 / np.sqrt(1.0 - beta2 ** self.t)
        for name, p in self.params.items():
            g = p.grad
            m = self._m[name]
            v = self._v[name]
            m *= beta1
            m += (1.0 - beta1) * g
            v *= beta2
            g *= g
            g *= 1.0 - beta2
            v += g
            # reuse the gradient buffer as update scratch
            np.sqrt(v, out=g)
            g *= inv_sqrt_c2
            g += eps
            np.divide(m, g, out=g)
            g *= step
            p.values -= g
        self.zero_grad()
