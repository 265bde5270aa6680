# This Source Code Form is subject to the terms of the Mozilla Public
# License, v. 2.0. If a copy of the MPL was not distributed with this
# file, You can obtain one at http://mozilla.org/MPL/2.0/.

from dataclasses import dataclass, field
from typing import (
    Dict,
    Mapping,
    Optional,
)

import numpy as np

from .exceptions import ShapeError
from .numcore import Tensor


@dataclass
class AdamState:
    """Bias-corrected Adam moments, keyed by parameter name."""

    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    first: Dict[str, np.ndarray] = field(default_factory=dict)
    second: Dict[str, np.ndarray] = field(default_factory=dict)


def adam_step(
    params: Mapping[str, Tensor],
    state: AdamState,
    grads: Optional[Mapping[str, np.ndarray]] = None,
):
    """Update `params` in place from `grads` (default: each parameter's `.grad`).

    Parameters without a gradient are treated as having a zero gradient.
    """
    state.step += 1
    correction1 = 1.0 - state.beta1**state.step
    correction2 = 1.0 - state.beta2**state.step

    for name, param in params.items():
        grad = grads[name] if grads is not None else param.grad
        if grad is None:
            grad = np.zeros_like(param.data)
        if grad.shape != param.shape:
            raise ShapeError(
                f"gradient {grad.shape} does not match parameter {name} {param.shape}"
            )
        first = state.first.setdefault(name, np.zeros_like(param.data))
        second = state.second.setdefault(name, np.zeros_like(param.data))
        if first.shape != param.shape:
            raise ShapeError(f"moment buffers for {name} have the wrong shape")

        first *= state.beta1
        first += (1.0 - state.beta1) * grad
        second *= state.beta2
        second += (1.0 - state.beta2) * grad * grad

        update = (first / correction1) / (np.sqrt(second / correction2) + state.eps)
        param.data -= (state.lr * update).astype(param.data.dtype)


def zero_grads(params: Mapping[str, Tensor]):
    for param in params.values():
        param.zero_grad()
