#!/usr/bin/env python3
"""
Network building blocks for the variational guides

- ParamStore: ordered, named trainable tensors plus per-parameter optimizer state
- dense / dropout / layer normalization layers over (batch, features) tensors
- ScoreNetwork: the one-hidden-layer noise-prediction MLP used by the diffusion guide
"""

import math
from collections.abc import Iterator, Mapping
from dataclasses import dataclass
from typing import Literal, Optional, Union

import numpy as np
from pydantic import BaseModel, Field, model_validator
from scipy.stats import truncnorm

from dmvi import autodiff as ad
from dmvi.autodiff import Tensor
from dmvi.config import settings
from dmvi.errors import ConfigurationError


# =============================================================================
# PARAMETER STORE
# =============================================================================

@dataclass
class AdamState:
    """First/second moment estimates and step count for one parameter."""
    m: np.ndarray
    v: np.ndarray
    step: int = 0


class ParamStore(Mapping[str, Tensor]):
    """
    Ordered map name -> trainable Tensor.
    Iteration order is insertion order, so gradients align with parameters by name.
    """

    def __init__(self):
        self._params: dict[str, Tensor] = {}
        self.state: dict[str, AdamState] = {}

    def add(self, name: str, value: np.ndarray) -> Tensor:
        if name in self._params:
            raise ConfigurationError(f"duplicate parameter name: {name}")
        tensor = Tensor(np.array(value, dtype=np.float64), requires_grad=True, name=name)
        self._params[name] = tensor
        self.state[name] = AdamState(m=np.zeros_like(tensor.data), v=np.zeros_like(tensor.data))
        return tensor

    def __getitem__(self, name: str) -> Tensor:
        return self._params[name]

    def __iter__(self) -> Iterator[str]:
        return iter(self._params)

    def __len__(self) -> int:
        return len(self._params)

    def num_parameters(self) -> int:
        return sum(t.data.size for t in self._params.values())

    def to_arrays(self) -> dict[str, np.ndarray]:
        return {name: t.data.copy() for name, t in self._params.items()}

    def load_arrays(self, arrays: Mapping[str, np.ndarray]) -> None:
        """Overwrite parameter values in place; names and shapes must match."""
        for name, tensor in self._params.items():
            if name not in arrays:
                raise ConfigurationError(f"missing parameter: {name}")
            value = np.asarray(arrays[name], dtype=np.float64)
            if value.shape != tensor.shape:
                raise ConfigurationError(f"shape mismatch for {name}: {value.shape} != {tensor.shape}")
            tensor.data = value.copy()


# =============================================================================
# LAYERS
# =============================================================================

def truncated_normal(rng: np.random.Generator, shape: tuple[int, ...], std: float) -> np.ndarray:
    """Normal draws truncated at two standard deviations."""
    return truncnorm.rvs(-2.0, 2.0, scale=std, size=shape, random_state=rng)


def dense(x: Tensor, weight: Tensor, bias: Tensor) -> Tensor:
    return x @ weight + bias


def dropout(x: Tensor, rate: float, train_mode: bool, rng: Optional[np.random.Generator]) -> Tensor:
    """Inverted dropout: kept units are scaled by 1/(1-rate) so the expectation is preserved."""
    if not train_mode or rate == 0.0:
        return x
    if rng is None:
        raise ConfigurationError("dropout in train mode needs a random stream")
    keep = rng.random(x.shape) >= rate
    return x * (keep / (1.0 - rate))


def normalize_layer(x: Tensor, gain: Tensor, offset: Tensor, eps: float = 1e-8) -> Tensor:
    return ad.layer_norm(x, eps=eps) * gain + offset


def sinusoidal_embedding(t: np.ndarray, n_steps: int, dim: int) -> np.ndarray:
    """Sin/cos features of the normalized time t/T, shape (len(t), dim)."""
    s = np.asarray(t, dtype=np.float64).reshape(-1, 1) / n_steps
    half = dim // 2
    freqs = np.exp(np.linspace(0.0, math.log(1000.0), half))
    angles = s * freqs
    return np.concatenate([np.sin(angles), np.cos(angles)], axis=1)


# =============================================================================
# SCORE NETWORK
# =============================================================================

class MLPConfig(BaseModel):
    """Architecture of the noise-prediction network."""

    input_dim: int = Field(..., ge=1, description="Dimension of xi (before time features)")
    hidden_dim: int = Field(default_factory=lambda: settings.HIDDEN_DIM, ge=1)
    output_dim: int = Field(..., ge=1)
    dropout_rate: float = Field(default_factory=lambda: settings.DROPOUT_RATE, ge=0.0, lt=1.0)
    activation: Literal["gelu"] = "gelu"
    layer_norm_enabled: bool = True
    time_embedding_dim: int = Field(default_factory=lambda: settings.TIME_EMBEDDING_DIM, ge=2)

    @model_validator(mode="after")
    def check_dims(self) -> "MLPConfig":
        if self.input_dim != self.output_dim:
            raise ValueError("score network maps xi back onto its own space: input_dim must equal output_dim")
        if self.time_embedding_dim % 2:
            raise ValueError("time_embedding_dim must be even")
        return self


class ScoreNetwork:
    """
    eps_phi(xi, t): dense(256) -> gelu -> layer-norm -> dropout -> dense(d).

    Hidden weights are truncated-normal (std 0.01); the output layer starts at zero,
    so the freshly built network is the zero map.
    """

    def __init__(
        self,
        config: MLPConfig,
        n_steps: int,
        rng: Optional[np.random.Generator] = None,
        params: Optional[ParamStore] = None,
    ):
        self.config = config
        self.n_steps = n_steps
        self.params = params if params is not None else ParamStore()
        if params is None:
            self._init_params(rng if rng is not None else np.random.default_rng())

    def _init_params(self, rng: np.random.Generator):
        c = self.config
        fan_in = c.input_dim + c.time_embedding_dim
        self.params.add("score.hidden.w", truncated_normal(rng, (fan_in, c.hidden_dim), settings.INIT_STD))
        self.params.add("score.hidden.b", np.zeros(c.hidden_dim))
        if c.layer_norm_enabled:
            self.params.add("score.norm.gain", np.ones(c.hidden_dim))
            self.params.add("score.norm.offset", np.zeros(c.hidden_dim))
        self.params.add("score.out.w", np.zeros((c.hidden_dim, c.output_dim)))
        self.params.add("score.out.b", np.zeros(c.output_dim))

    def __call__(
        self,
        xi: Tensor,
        t: Union[int, np.ndarray],
        train_mode: bool = False,
        rng: Optional[np.random.Generator] = None,
    ) -> Tensor:
        xi = ad.as_tensor(xi)
        squeeze = xi.ndim == 1
        if squeeze:
            xi = ad.reshape(xi, (1, -1))
        if xi.ndim != 2 or xi.shape[1] != self.config.output_dim:
            raise ConfigurationError(f"score network expects (*, {self.config.output_dim}), got {xi.shape}")

        t_arr = np.broadcast_to(np.asarray(t, dtype=np.int64), (xi.shape[0],))
        if t_arr.min() < 1 or t_arr.max() > self.n_steps:
            raise ConfigurationError(f"diffusion time outside [1, {self.n_steps}]")

        p = self.params
        features = ad.concat(
            [xi, Tensor(sinusoidal_embedding(t_arr, self.n_steps, self.config.time_embedding_dim))],
            axis=1,
        )
        h = ad.gelu(dense(features, p["score.hidden.w"], p["score.hidden.b"]))
        if self.config.layer_norm_enabled:
            h = normalize_layer(h, p["score.norm.gain"], p["score.norm.offset"])
        h = dropout(h, self.config.dropout_rate, train_mode, rng)
        out = dense(h, p["score.out.w"], p["score.out.b"])
        return ad.reshape(out, (-1,)) if squeeze else out


def score_forward(
    net: ScoreNetwork,
    xi: Tensor,
    t: Union[int, np.ndarray],
    train_mode: bool = False,
    rng: Optional[np.random.Generator] = None,
) -> Tensor:
    """Predicted noise for xi at diffusion time t."""
    return net(xi, t, train_mode=train_mode, rng=rng)
