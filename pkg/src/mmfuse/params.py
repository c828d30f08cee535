"""Parameter containers: naming, initialisation, traversal."""

import dataclasses
import math

import numpy as np

from .tensor import Tensor


def glorot(rng, shape, fan_in, fan_out, name=None):
    """Uniform(-a, a) with a = sqrt(6 / (fan_in + fan_out))."""
    a = math.sqrt(6.0 / (fan_in + fan_out))
    return Tensor(rng.uniform(-a, a, size=shape), requires_grad=True, name=name)


def zeros(shape, name=None):
    return Tensor(np.zeros(shape), requires_grad=True, name=name)


def ones(shape, name=None):
    return Tensor(np.ones(shape), requires_grad=True, name=name)


def named_parameters(obj, prefix=""):
    """Yield ``(dotted_name, Tensor)`` for every trainable tensor in ``obj``.

    Walks dataclasses, lists/tuples and dicts in declaration order.  Tensors
    with ``requires_grad=False`` (fixed tables) are skipped.
    """
    if isinstance(obj, Tensor):
        if obj.requires_grad:
            yield prefix, obj
    elif dataclasses.is_dataclass(obj):
        for f in dataclasses.fields(obj):
            yield from named_parameters(getattr(obj, f.name), _join(prefix, f.name))
    elif isinstance(obj, (list, tuple)):
        for i, item in enumerate(obj):
            yield from named_parameters(item, _join(prefix, str(i)))
    elif isinstance(obj, dict):
        for key, item in obj.items():
            yield from named_parameters(item, _join(prefix, str(key)))


def _join(prefix, name):
    return f"{prefix}.{name}" if prefix else name
