"""
Unconstraining bijections f: constrained theta -> real xi, with exact log|det J_{f^-1}|

The table is fixed: Identity for real-valued blocks, LogExp for positive blocks.
All methods accept numpy arrays or graph Tensors.
"""

from abc import ABC, abstractmethod
from typing import Literal, Union

import numpy as np

from dmvi import autodiff as ad
from dmvi.autodiff import Tensor
from dmvi.errors import ConfigurationError, DomainError

Value = Union[np.ndarray, Tensor]


class Bijector(ABC):
    name: str = "bijector"

    @abstractmethod
    def forward(self, theta: Value) -> Value:
        """Constrained -> unconstrained."""

    @abstractmethod
    def inverse(self, xi: Value) -> Value:
        """Unconstrained -> constrained."""

    @abstractmethod
    def log_det_inverse(self, xi: Value) -> Value:
        """log|det J_{f^-1}(xi)|, summed over the last axis (scalar for 0-d input)."""

    def __repr__(self) -> str:
        return f"{type(self).__name__}()"


class Identity(Bijector):
    name = "identity"

    def forward(self, theta: Value) -> Value:
        return theta

    def inverse(self, xi: Value) -> Value:
        return xi

    def log_det_inverse(self, xi: Value) -> Value:
        values = xi.data if isinstance(xi, Tensor) else np.asarray(xi, dtype=np.float64)
        shape = values.shape[:-1] if values.ndim else ()
        return np.zeros(shape)


class LogExp(Bijector):
    """xi = log(theta), theta = exp(xi); log|d theta / d xi| = xi."""

    name = "log_exp"

    def forward(self, theta: Value) -> Value:
        values = theta.data if isinstance(theta, Tensor) else np.asarray(theta, dtype=np.float64)
        if np.any(values <= 0.0):
            raise DomainError("log/exp bijector needs theta > 0")
        return ad.log(theta) if isinstance(theta, Tensor) else np.log(values)

    def inverse(self, xi: Value) -> Value:
        return ad.exp(xi) if isinstance(xi, Tensor) else np.exp(np.asarray(xi, dtype=np.float64))

    def log_det_inverse(self, xi: Value) -> Value:
        if isinstance(xi, Tensor):
            return ad.tsum(xi, axis=-1) if xi.ndim else xi
        values = np.asarray(xi, dtype=np.float64)
        return values.sum(axis=-1) if values.ndim else values


IDENTITY = Identity()
LOG_EXP = LogExp()


def bijector_apply(b: Bijector, direction: Literal["forward", "inverse"], x: Value) -> Value:
    if direction == "forward":
        return b.forward(x)
    if direction == "inverse":
        return b.inverse(x)
    raise ConfigurationError(f"unknown direction: {direction}")


def bijector_log_det_inverse(b: Bijector, xi: Value) -> Value:
    return b.log_det_inverse(xi)
