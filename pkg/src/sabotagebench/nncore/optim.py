"""Plain SGD. No momentum, no schedules; determinism over sophistication."""

import numpy as np

from ..errors import NumericsError
from .tensor import ParamSet


def sgd_step(params: ParamSet, learning_rate: float) -> ParamSet:
    """p <- p - lr * grad for every parameter, then zero all gradients."""
    for name, param in params.items():
        if not np.isfinite(param.grad).all():
            raise NumericsError(f"non-finite gradient in parameter '{name}'")
        param.value -= param.value.dtype.type(learning_rate) * param.grad
    params.zero_grads()
    return params
