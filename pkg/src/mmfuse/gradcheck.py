"""Central finite-difference gradient checking in float64."""

from dataclasses import dataclass, field

import numpy as np

from .rng import Rng
from .tensor import backward, precision


@dataclass
class GradcheckReport:
    max_error: float
    worst: str
    errors: dict = field(default_factory=dict)

    def passed(self, tol):
        return self.max_error < tol


def relative_error(analytic, numeric):
    return abs(analytic - numeric) / max(1e-8, abs(analytic) + abs(numeric))


def gradcheck_report(f, params, eps=1e-4, coords_per_param=None, seed=0):
    """Compare backprop gradients of ``f()`` against central differences.

    ``f`` takes no arguments and returns a scalar Tensor built from
    ``params``, a list of leaf tensors or of ``(name, tensor)`` pairs.
    Parameter data is promoted to float64 for the duration of the check and
    restored afterwards.  ``coords_per_param`` limits how many randomly
    chosen coordinates of each tensor are checked (all when ``None``).
    """
    named = [p if isinstance(p, tuple) else (p.name or f"param{i}", p) for i, p in enumerate(params)]
    saved = [(t, t.data, t.grad, t.requires_grad) for _, t in named]
    rng = Rng(seed)
    errors = {}
    try:
        with precision(np.float64):
            for _, t in named:
                t.data = t.data.astype(np.float64)
                t.grad = None
                t.requires_grad = True
            backward(f())
            for name, t in named:
                analytic = np.zeros_like(t.data) if t.grad is None else t.grad
                flat = t.data.reshape(-1)
                if coords_per_param is None or coords_per_param >= flat.size:
                    coords = range(flat.size)
                else:
                    coords = sorted({rng.randbelow(flat.size) for _ in range(coords_per_param)})
                worst = 0.0
                for idx in coords:
                    orig = flat[idx]
                    flat[idx] = orig + eps
                    up = f().item()
                    flat[idx] = orig - eps
                    down = f().item()
                    flat[idx] = orig
                    numeric = (up - down) / (2 * eps)
                    worst = max(worst, relative_error(float(analytic.reshape(-1)[idx]), numeric))
                errors[name] = worst
    finally:
        for t, data, grad, req in saved:
            t.data, t.grad, t.requires_grad = data, grad, req
    if not errors:
        return GradcheckReport(0.0, "", {})
    worst_name = max(errors, key=errors.get)
    return GradcheckReport(errors[worst_name], worst_name, errors)


def gradcheck(f, params, eps=1e-4, coords_per_param=None, seed=0):
    """Maximum relative error between analytic and numeric gradients."""
    return gradcheck_report(f, params, eps, coords_per_param, seed).max_error
