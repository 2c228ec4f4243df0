"""Dense float64 tensors with a tensor-level reverse-mode tape.

Each op builds its output from numpy arrays and, when any input requires a
gradient, records a closure mapping the output gradient to one gradient per
parent. :meth:`Tensor.backward` replays the closures in reverse topological
order. Leading axes are treated as batch axes by every op.
"""

import numpy as np

from ..errors import ConfigurationError, DimensionError, NumericError
from . import kernels
from .fft import inverse_real_fft, real_fft


class Tensor:
    """A value in the computation graph.

    ``grad`` is materialised lazily: a node that was never reached by a
    backward pass reports an all-zero gradient of its own shape.
    """

    __slots__ = ("data", "requires_grad", "_grad", "_parents", "_backward", "name")

    def __init__(self, data, requires_grad=False, name=None):
        self.data = np.asarray(data, dtype=np.float64)
        self.requires_grad = requires_grad
        self._grad = None
        self._parents = ()
        self._backward = None
        self.name = name

    # ---------------------------------------------------------------- basics
    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def grad(self):
        if self._grad is None:
            return np.zeros_like(self.data)
        return self._grad

    @grad.setter
    def grad(self, value):
        self._grad = value

    def zero_grad(self):
        self._grad = None

    def numpy(self):
        return self.data

    def __repr__(self):
        tag = f" name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}{tag}, requires_grad={self.requires_grad})"

    def backward(self, grad=None):
        """Accumulate d(self)/d(leaf) into every reachable ``requires_grad`` node."""
        if grad is None:
            if self.data.size != 1:
                raise DimensionError("backward() without a seed needs a scalar output")
            grad = np.ones_like(self.data)
        order = []
        seen = set()
        stack = [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                order.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                if p.requires_grad and id(p) not in seen:
                    stack.append((p, False))
        grads = {id(self): np.asarray(grad, dtype=np.float64)}
        for node in reversed(order):
            g = grads.pop(id(node), None)
            if g is None:
                continue
            if node._backward is None:
                node._grad = g if node._grad is None else node._grad + g
                continue
            for parent, pg in zip(node._parents, node._backward(g)):
                if pg is None or not parent.requires_grad:
                    continue
                key = id(parent)
                grads[key] = pg if key not in grads else grads[key] + pg

    # ------------------------------------------------------------ operators
    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __neg__(self):
        return mul(self, -1.0)

    def __truediv__(self, other):
        if isinstance(other, Tensor):
            raise TypeError("division by a Tensor is not supported")
        return mul(self, 1.0 / other)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, index):
        return getitem(self, index)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)

    def transpose(self, *axes):
        return transpose(self, axes)

    def sum(self, axis=None, keepdims=False):
        return tsum(self, axis, keepdims)

    def mean(self, axis=None, keepdims=False):
        return mean(self, axis, keepdims)


def as_tensor(x):
    return x if isinstance(x, Tensor) else Tensor(x)


def _result(data, parents, backward):
    out = Tensor(data)
    if any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = tuple(parents)
        out._backward = backward
    return out


def check_finite(t, where):
    """Raise :class:`NumericError` naming ``where`` if ``t`` holds NaN/Inf."""
    data = t.data if isinstance(t, Tensor) else np.asarray(t)
    if not np.isfinite(data).all():
        raise NumericError(f"non-finite values in {where}")
    return t


def _unbroadcast(g, shape):
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and g.shape[axis] != 1:
            g = g.sum(axis=axis, keepdims=True)
    return g


# ------------------------------------------------------------- elementwise
def add(a, b):
    a, b = as_tensor(a), as_tensor(b)
    sa, sb = a.shape, b.shape
    return _result(a.data + b.data, (a, b), lambda g: (_unbroadcast(g, sa), _unbroadcast(g, sb)))


def sub(a, b):
    a, b = as_tensor(a), as_tensor(b)
    sa, sb = a.shape, b.shape
    return _result(a.data - b.data, (a, b), lambda g: (_unbroadcast(g, sa), -_unbroadcast(g, sb)))


def mul(a, b):
    a, b = as_tensor(a), as_tensor(b)
    ad, bd = a.data, b.data

    def backward(g):
        return (
            _unbroadcast(g * bd, ad.shape) if a.requires_grad else None,
            _unbroadcast(g * ad, bd.shape) if b.requires_grad else None,
        )

    return _result(ad * bd, (a, b), backward)


def relu(x):
    x = as_tensor(x)
    mask = x.data > 0
    return _result(np.where(mask, x.data, 0.0), (x,), lambda g: (g * mask,))


def exp(x):
    x = as_tensor(x)
    y = np.exp(x.data)
    return _result(y, (x,), lambda g: (g * y,))


# ---------------------------------------------------------------- algebra
def matmul(a, b):
    """Matrix product over the last two axes; leading axes broadcast."""
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim < 2 or b.ndim < 2 or a.shape[-1] != b.shape[-2]:
        raise DimensionError(f"matmul shape mismatch: {a.shape} @ {b.shape}")
    ad, bd = a.data, b.data

    def backward(g):
        ga = gb = None
        if a.requires_grad:
            ga = _unbroadcast(g @ np.swapaxes(bd, -1, -2), ad.shape)
        if b.requires_grad:
            if bd.ndim == 2:
                gb = ad.reshape(-1, ad.shape[-1]).T @ g.reshape(-1, g.shape[-1])
            else:
                gb = _unbroadcast(np.swapaxes(ad, -1, -2) @ g, bd.shape)
        return ga, gb

    return _result(ad @ bd, (a, b), backward)


def linear(x, weight, bias=None):
    out = matmul(x, weight)
    return out if bias is None else add(out, bias)


def tsum(x, axis=None, keepdims=False):
    x = as_tensor(x)
    shape = x.shape

    def backward(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, shape).copy(),)

    return _result(x.data.sum(axis=axis, keepdims=keepdims), (x,), backward)


def mean(x, axis=None, keepdims=False):
    x = as_tensor(x)
    count = x.data.size if axis is None else np.prod([x.shape[a] for a in np.atleast_1d(axis)])
    return mul(tsum(x, axis, keepdims), 1.0 / count)


def softmax(x, axis=-1):
    """Max-subtracted softmax; differentiable."""
    x = as_tensor(x)
    y = softmax_array(x.data, axis)

    def backward(g):
        return (y * (g - (g * y).sum(axis=axis, keepdims=True)),)

    return _result(y, (x,), backward)


def softmax_array(x, axis=-1):
    z = x - x.max(axis=axis, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=axis, keepdims=True)


# ----------------------------------------------------------------- layout
def reshape(x, shape):
    x = as_tensor(x)
    old = x.shape
    return _result(x.data.reshape(shape), (x,), lambda g: (g.reshape(old),))


def transpose(x, axes):
    x = as_tensor(x)
    axes = tuple(axes)
    inverse = tuple(np.argsort(axes))
    return _result(np.transpose(x.data, axes), (x,), lambda g: (np.transpose(g, inverse),))


def getitem(x, index):
    x = as_tensor(x)
    shape = x.shape

    def backward(g):
        out = np.zeros(shape)
        if _is_fancy(index):
            np.add.at(out, index, g)
        else:
            out[index] = g
        return (out,)

    return _result(x.data[index], (x,), backward)


def _is_fancy(index):
    items = index if isinstance(index, tuple) else (index,)
    return any(isinstance(i, (list, np.ndarray)) for i in items)


def concat(tensors, axis):
    tensors = [as_tensor(t) for t in tensors]
    sizes = [t.shape[axis] for t in tensors]
    cuts = np.cumsum(sizes)[:-1]
    return _result(
        np.concatenate([t.data for t in tensors], axis=axis),
        tensors,
        lambda g: tuple(np.split(g, cuts, axis=axis)),
    )


def take_along_axis(x, index, axis=-1):
    """Differentiable ``np.take_along_axis`` (``index`` is constant)."""
    x = as_tensor(x)
    shape = x.shape

    def backward(g):
        out = np.zeros(shape)
        np.put_along_axis(out, index, g, axis=axis)  # indices are distinct per row
        return (out,)

    return _result(np.take_along_axis(x.data, index, axis=axis), (x,), backward)


def circular_roll(x, tau, axis=-2):
    """Left circular shift: ``out[t] = x[(t + tau) mod L]`` along ``axis``."""
    x = as_tensor(x)
    return _result(np.roll(x.data, -tau, axis=axis), (x,), lambda g: (np.roll(g, tau, axis=axis),))


def pad_or_truncate(x, length, axis=-2):
    """Keep the first ``length`` steps, zero-padding at the end when short."""
    x = as_tensor(x)
    current = x.shape[axis]
    if current == length:
        return x
    if current > length:
        index = [slice(None)] * x.ndim
        index[axis] = slice(0, length)
        return getitem(x, tuple(index))
    pad_shape = list(x.shape)
    pad_shape[axis] = length - current
    return concat([x, Tensor(np.zeros(pad_shape))], axis=axis)


# ------------------------------------------------------------ time series
def avg_pool_1d(x, kernel):
    """Moving average over axis -2 with replicate-edge padding.

    Output length equals input length. ``kernel`` must be a positive odd int.
    """
    if kernel < 1 or kernel % 2 == 0:
        raise ConfigurationError(f"moving-average kernel must be odd and positive, got {kernel}")
    x = as_tensor(x)
    if kernel == 1:
        return _result(x.data.copy(), (x,), lambda g: (g,))
    return _result(
        kernels.moving_average(x.data, kernel), (x,), lambda g: (kernels.moving_average_grad(g, kernel),)
    )


def delay_aggregate(v, lags, weights):
    """sum_i weights[..., i] * roll(v, lags[..., i]) along axis -2.

    ``lags`` is a constant integer array; ``v`` and ``weights`` are
    differentiable.
    """
    v, weights = as_tensor(v), as_tensor(weights)

    def backward(g):
        return kernels.delay_aggregate_grad(g, v.data, lags, weights.data)

    return _result(kernels.delay_aggregate(v.data, lags, weights.data), (v, weights), backward)


def circular_correlation(q, k, scale=1.0):
    """r[..., tau] = scale * sum_{t,c} q[..., t, c] * k[..., (t - tau) mod L, c].

    Evaluated with real FFTs along axis -2, channels summed in the frequency
    domain. Differentiable w.r.t. both inputs.
    """
    q, k = as_tensor(q), as_tensor(k)
    if q.shape != k.shape:
        raise DimensionError(f"correlation needs equal shapes, got {q.shape} and {k.shape}")
    length = q.shape[-2]
    fq = real_fft(q.data, axis=-2)
    fk = real_fft(k.data, axis=-2)
    r = scale * inverse_real_fft((fq * np.conj(fk)).sum(axis=-1), length, axis=-1)

    def backward(g):
        fg = real_fft(g, axis=-1)[..., None]
        gq = gk = None
        if q.requires_grad:
            gq = scale * inverse_real_fft(fg * fk, length, axis=-2)
        if k.requires_grad:
            gk = scale * inverse_real_fft(fq * np.conj(fg), length, axis=-2)
        return gq, gk

    return _result(r, (q, k), backward)


def mse_loss(pred, target):
    pred, target = as_tensor(pred), as_tensor(target)
    if pred.shape != target.shape:
        raise DimensionError(f"loss shape mismatch: {pred.shape} vs {target.shape}")
    diff = sub(pred, target)
    return mean(mul(diff, diff))
