"""Multi-modal (MRI + PET + tabular) fusion classifier on a numpy autodiff core."""

from .tensor import Tensor, backward, no_grad, precision

__version__ = "0.1.0"

__all__ = ["Tensor", "backward", "no_grad", "precision", "__version__"]
