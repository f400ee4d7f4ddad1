"""
AdamW with decoupled weight decay, operating on a ParamStore in place
"""

from collections.abc import Mapping
from typing import Optional

import numpy as np

from dmvi.config import settings
from dmvi.errors import NumericFailureError
from dmvi.nn import ParamStore


def adamw_step(
    params: ParamStore,
    grads: Mapping[str, np.ndarray],
    lr: float,
    beta1: Optional[float] = None,
    beta2: Optional[float] = None,
    eps: Optional[float] = None,
    weight_decay: Optional[float] = None,
) -> ParamStore:
    """
    One descent step on every parameter.

    theta <- theta * (1 - lr * wd), then theta <- theta - lr * m_hat / (sqrt(v_hat) + eps)
    with bias-corrected moments. Each parameter is updated from its own state only.
    """
    beta1 = settings.ADAMW_BETA1 if beta1 is None else beta1
    beta2 = settings.ADAMW_BETA2 if beta2 is None else beta2
    eps = settings.ADAMW_EPS if eps is None else eps
    weight_decay = settings.ADAMW_WEIGHT_DECAY if weight_decay is None else weight_decay

    for name in params:
        if not np.all(np.isfinite(grads[name])):
            raise NumericFailureError("non-finite gradient", where=name)

    for name, tensor in params.items():
        grad = grads[name]
        state = params.state[name]
        state.step += 1
        state.m = beta1 * state.m + (1.0 - beta1) * grad
        state.v = beta2 * state.v + (1.0 - beta2) * grad**2
        m_hat = state.m / (1.0 - beta1**state.step)
        v_hat = state.v / (1.0 - beta2**state.step)

        value = tensor.data * (1.0 - lr * weight_decay)
        tensor.data = value - lr * m_hat / (np.sqrt(v_hat) + eps)

    return params
