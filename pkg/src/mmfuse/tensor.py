"""Dense tensors with reverse-mode differentiation.

Values are stored as float32 numpy arrays.  Inside ``precision(np.float64)``
every newly created tensor is float64 instead; the gradient checker relies
on this.  Broadcasting is deliberately limited to exact shape matches and
scalars, plus the explicit last-axis ``add_bias``.

Every op accepts arbitrary leading (batch) axes unless noted.
"""

import contextlib
import contextvars
import math

import numpy as np

from .errors import ContractError, DimensionError

_dtype = contextvars.ContextVar("mmfuse_dtype", default=np.float32)
_grad_enabled = contextvars.ContextVar("mmfuse_grad_enabled", default=True)

GELU_C = math.sqrt(2.0 / math.pi)
GELU_A = 0.044715


def get_dtype():
    return _dtype.get()


@contextlib.contextmanager
def precision(dtype):
    token = _dtype.set(np.dtype(dtype).type)
    try:
        yield
    finally:
        _dtype.reset(token)


@contextlib.contextmanager
def no_grad():
    token = _grad_enabled.set(False)
    try:
        yield
    finally:
        _grad_enabled.reset(token)


class Tensor:
    """A value node in the computation graph.

    Leaves created by the user carry ``requires_grad``; results of ops keep
    references to their parents and a closure mapping the output gradient
    to one gradient per parent.  ``grad`` is only populated on leaves.
    """

    __slots__ = ("data", "grad", "requires_grad", "name", "_parents", "_backward")

    def __init__(self, data, requires_grad=False, name=None):
        self.data = np.asarray(data, dtype=get_dtype())
        self.grad = None
        self.requires_grad = requires_grad
        self.name = name
        self._parents = ()
        self._backward = None

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def size(self):
        return self.data.size

    def numpy(self):
        return self.data

    def item(self):
        return float(self.data.reshape(()))

    def zero_grad(self):
        self.grad = None

    def detach(self):
        return Tensor(self.data)

    def __repr__(self):
        label = f" {self.name}" if self.name else ""
        return f"Tensor{label}(shape={list(self.shape)}, requires_grad={self.requires_grad})"

    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __matmul__(self, other):
        return matmul(self, other)

    def __neg__(self):
        return scale(self, -1.0)

    def __sub__(self, other):
        return add(self, scale(as_tensor(other), -1.0))

    def backward(self):
        backward(self)


def as_tensor(x):
    return x if isinstance(x, Tensor) else Tensor(x)


def _result(data, parents, backward_fn):
    out = Tensor(data)
    if _grad_enabled.get() and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = tuple(parents)
        out._backward = backward_fn
    return out


def _is_scalar(t):
    return t.data.ndim == 0 or t.data.size == 1 and t.data.ndim <= 1


def _check_elementwise(a, b, opname):
    if a.shape == b.shape or _is_scalar(a) or _is_scalar(b):
        return
    raise DimensionError(f"{opname}: incompatible shapes {list(a.shape)} and {list(b.shape)}")


def _reduce_to(grad, t):
    """Sum a broadcast gradient back down to ``t``'s shape."""
    if grad.shape == t.shape:
        return grad
    return np.sum(grad).reshape(t.shape)


# ---------------------------------------------------------------- elementwise


def add(a, b):
    a, b = as_tensor(a), as_tensor(b)
    _check_elementwise(a, b, "add")

    def back(g):
        return _reduce_to(g, a), _reduce_to(g, b)

    return _result(a.data + b.data, (a, b), back)


def mul(a, b):
    a, b = as_tensor(a), as_tensor(b)
    _check_elementwise(a, b, "mul")

    def back(g):
        return _reduce_to(g * b.data, a), _reduce_to(g * a.data, b)

    return _result(a.data * b.data, (a, b), back)


def scale(x, c):
    """Multiply by a constant (no gradient to ``c``)."""
    return _result(x.data * c, (x,), lambda g: (g * c,))


def relu(x):
    mask = x.data > 0
    return _result(np.where(mask, x.data, 0), (x,), lambda g: (g * mask,))


def gelu(x):
    """GELU, tanh approximation: 0.5 x (1 + tanh(sqrt(2/pi) (x + 0.044715 x^3)))."""
    v = x.data
    inner = GELU_C * (v + GELU_A * v**3)
    th = np.tanh(inner)
    out = 0.5 * v * (1.0 + th)

    def back(g):
        d_inner = GELU_C * (1.0 + 3.0 * GELU_A * v**2)
        return (g * (0.5 * (1.0 + th) + 0.5 * v * (1.0 - th**2) * d_inner),)

    return _result(out, (x,), back)


_ELEMENTWISE = {"add": add, "mul": mul, "gelu": gelu, "relu": relu}


def elementwise(op, *inputs):
    try:
        fn = _ELEMENTWISE[op]
    except KeyError:
        raise ValueError(f"unknown elementwise op {op!r}") from None
    return fn(*inputs)


def add_bias(x, b):
    """``x[..., d] + b[d]``."""
    if b.ndim != 1 or x.shape[-1:] != b.shape:
        raise DimensionError(f"add_bias: bias {list(b.shape)} does not match {list(x.shape)}")

    def back(g):
        return g, g.reshape(-1, b.shape[0]).sum(axis=0)

    return _result(x.data + b.data, (x, b), back)


# -------------------------------------------------------------- linear algebra


def matmul(a, b):
    """``a[..., m, k] @ b[k, n]`` or with matching batch axes on ``b``."""
    if a.ndim < 2 or b.ndim < 2 or a.shape[-1] != b.shape[-2]:
        raise DimensionError(f"matmul: cannot multiply {list(a.shape)} by {list(b.shape)}")
    if b.ndim > 2 and b.shape[:-2] != a.shape[:-2]:
        raise DimensionError(f"matmul: batch axes differ in {list(a.shape)} and {list(b.shape)}")
    out = a.data @ b.data

    def back(g):
        ga = g @ np.swapaxes(b.data, -1, -2)
        if b.ndim == 2:
            k, n = b.shape
            gb = a.data.reshape(-1, k).T @ g.reshape(-1, n)
        else:
            gb = np.swapaxes(a.data, -1, -2) @ g
        return ga, gb

    return _result(out, (a, b), back)


def transpose(x):
    """Swap the last two axes."""
    return _result(np.swapaxes(x.data, -1, -2), (x,), lambda g: (np.swapaxes(g, -1, -2),))


def permute(x, axes):
    inverse = np.argsort(axes)
    return _result(np.transpose(x.data, axes), (x,), lambda g: (np.transpose(g, inverse),))


def reshape(x, shape):
    original = x.shape
    return _result(x.data.reshape(shape), (x,), lambda g: (g.reshape(original),))


def concat(tensors, axis):
    tensors = [as_tensor(t) for t in tensors]
    nd = tensors[0].ndim
    ax = axis % nd
    for t in tensors[1:]:
        if t.ndim != nd or any(t.shape[i] != tensors[0].shape[i] for i in range(nd) if i != ax):
            shapes = [list(u.shape) for u in tensors]
            raise DimensionError(f"concat along axis {axis}: incompatible shapes {shapes}")
    bounds = np.cumsum([t.shape[ax] for t in tensors])[:-1]

    def back(g):
        return tuple(np.split(g, bounds, axis=ax))

    return _result(np.concatenate([t.data for t in tensors], axis=ax), tensors, back)


def mean(x, axis):
    n = x.shape[axis]

    def back(g):
        return (np.broadcast_to(np.expand_dims(g, axis) / n, x.shape).copy(),)

    return _result(x.data.mean(axis=axis), (x,), back)


def sum_all(x):
    return _result(x.data.sum(), (x,), lambda g: (np.broadcast_to(g, x.shape).copy(),))


# ------------------------------------------------------------ normalisations


def softmax_rows(x):
    """Softmax over the last axis, max-subtracted."""
    shifted = x.data - x.data.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    s = e / e.sum(axis=-1, keepdims=True)

    def back(g):
        return (s * (g - (g * s).sum(axis=-1, keepdims=True)),)

    return _result(s, (x,), back)


def layer_norm(x, gain, bias, eps=1e-5):
    d = x.shape[-1]
    if gain.shape != (d,) or bias.shape != (d,):
        raise DimensionError(
            f"layer_norm: gain {list(gain.shape)} / bias {list(bias.shape)} vs input {list(x.shape)}"
        )
    mu = x.data.mean(axis=-1, keepdims=True)
    xc = x.data - mu
    var = (xc**2).mean(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = xc * inv
    out = xhat * gain.data + bias.data

    def back(g):
        gx_hat = g * gain.data
        gx = inv * (
            gx_hat
            - gx_hat.mean(axis=-1, keepdims=True)
            - xhat * (gx_hat * xhat).mean(axis=-1, keepdims=True)
        )
        flat_g = g.reshape(-1, d)
        return gx, (flat_g * xhat.reshape(-1, d)).sum(axis=0), flat_g.sum(axis=0)

    return _result(out, (x, gain, bias), back)


def cross_entropy(logits, labels):
    """Mean of ``-log softmax(logits)[label]`` over the leading axes.

    ``logits`` is ``[c]`` with an int label, or ``[B, c]`` with ``B`` labels.
    """
    c = logits.shape[-1]
    lab = np.atleast_1d(np.asarray(labels, dtype=np.int64))
    flat = logits.data.reshape(-1, c)
    if lab.shape[0] != flat.shape[0]:
        raise DimensionError(f"cross_entropy: {lab.shape[0]} labels for logits {list(logits.shape)}")
    if np.any(lab < 0) or np.any(lab >= c):
        raise IndexError(f"cross_entropy: label out of range [0, {c}): {lab.tolist()}")
    shifted = flat - flat.max(axis=-1, keepdims=True)
    logz = np.log(np.exp(shifted).sum(axis=-1, keepdims=True))
    logp = shifted - logz
    rows = np.arange(flat.shape[0])
    loss = -logp[rows, lab].mean()

    def back(g):
        p = np.exp(logp)
        p[rows, lab] -= 1.0
        return ((g / flat.shape[0]) * p.reshape(logits.shape),)

    return _result(loss, (logits,), back)


# ---------------------------------------------------------------- convolution


def depthwise_conv2d(x, kernel, bias):
    """Per-channel 2-D convolution with zero 'same' padding.

    ``x`` is channels-last ``[..., H, W, C]``, ``kernel`` is ``[kh, kw, C]``
    with odd kh/kw, ``bias`` is ``[C]``.  Computed as cross-correlation,
    the usual deep-learning convention.
    """
    kh, kw, c = kernel.shape
    if x.shape[-1] != c or bias.shape != (c,) or kh % 2 == 0 or kw % 2 == 0:
        raise DimensionError(
            f"depthwise_conv2d: input {list(x.shape)}, kernel {list(kernel.shape)}, bias {list(bias.shape)}"
        )
    h, w = x.shape[-3], x.shape[-2]
    ph, pw = kh // 2, kw // 2
    lead = [(0, 0)] * (x.ndim - 3)
    xp = np.pad(x.data, lead + [(ph, ph), (pw, pw), (0, 0)])
    out = np.zeros(x.shape, dtype=np.result_type(x.data, kernel.data))
    for i in range(kh):
        for j in range(kw):
            out += xp[..., i : i + h, j : j + w, :] * kernel.data[i, j]
    out += bias.data

    def back(g):
        gxp = np.zeros(xp.shape, dtype=g.dtype)
        gk = np.zeros(kernel.shape, dtype=g.dtype)
        for i in range(kh):
            for j in range(kw):
                gxp[..., i : i + h, j : j + w, :] += g * kernel.data[i, j]
                gk[i, j] = (g * xp[..., i : i + h, j : j + w, :]).reshape(-1, c).sum(axis=0)
        gx = gxp[..., ph : ph + h, pw : pw + w, :]
        return gx, gk, g.reshape(-1, c).sum(axis=0)

    return _result(out, (x, kernel, bias), back)


# -------------------------------------------------------------------- autodiff


def _topological_order(root):
    order, seen = [], set()
    stack = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for parent in node._parents:
            if id(parent) not in seen:
                stack.append((parent, False))
    return order


def backward(loss):
    """Populate ``.grad`` on every leaf reachable from the scalar ``loss``.

    Gradients accumulate additively, both for nodes reached along several
    paths and across repeated calls (call ``zero_grad`` between steps).
    """
    if loss.data.size != 1:
        raise ContractError(f"backward needs a scalar loss, got shape {list(loss.shape)}")
    grads = {id(loss): np.ones_like(loss.data)}
    for node in reversed(_topological_order(loss)):
        g = grads.pop(id(node), None)
        if g is None:
            continue
        if node._backward is None:
            if node.requires_grad:
                node.grad = g.copy() if node.grad is None else node.grad + g
            continue
        for parent, pg in zip(node._parents, node._backward(g)):
            if pg is None or not parent.requires_grad:
                continue
            key = id(parent)
            grads[key] = pg if key not in grads else grads[key] + pg
