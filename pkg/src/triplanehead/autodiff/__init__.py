from . import checkpoint, nn, ops
from .gradcheck import finite_difference_check, finite_difference_report
from .tensor import Graph, ShapeError, Tensor, as_tensor, backward, is_grad_enabled, no_grad

__all__ = [
    "Graph",
    "ShapeError",
    "Tensor",
    "as_tensor",
    "backward",
    "checkpoint",
    "finite_difference_check",
    "finite_difference_report",
    "is_grad_enabled",
    "nn",
    "no_grad",
    "ops",
]
