"""
Probability densities and samplers used by the benchmark models

Parameters may be plain floats/arrays or graph Tensors (hierarchical priors take
their location and scale from other latent blocks); log_prob is differentiable
in both the value and the parameters.
"""

import math
from abc import ABC, abstractmethod
from typing import Union

import numpy as np

from dmvi import autodiff as ad
from dmvi.autodiff import Tensor
from dmvi.errors import ParameterError

HALF_LOG_2PI = 0.5 * math.log(2.0 * math.pi)
LOG_2 = math.log(2.0)

Param = Union[float, np.ndarray, Tensor]


def _values(param: Param) -> np.ndarray:
    return param.data if isinstance(param, Tensor) else np.asarray(param, dtype=np.float64)


def _check_scale(scale: Param, name: str = "scale") -> None:
    if not np.all(_values(scale) > 0.0):
        raise ParameterError(f"{name} must be strictly positive")


def _normal_log_density(x: Tensor, loc: Param, scale: Param) -> Tensor:
    z = (x - loc) / scale
    log_scale = ad.log(scale) if isinstance(scale, Tensor) else np.log(_values(scale))
    return -0.5 * z * z - log_scale - HALF_LOG_2PI


class Distribution(ABC):
    """Common interface: differentiable log density and seeded i.i.d. sampling."""

    @abstractmethod
    def log_prob(self, x: Union[Tensor, np.ndarray]) -> Tensor:
        ...

    @abstractmethod
    def sample(self, rng: np.random.Generator, n: int) -> np.ndarray:
        ...


class Normal(Distribution):
    """Univariate (elementwise) normal."""

    def __init__(self, loc: Param, scale: Param):
        _check_scale(scale)
        self.loc = loc
        self.scale = scale

    def log_prob(self, x: Union[Tensor, np.ndarray]) -> Tensor:
        return _normal_log_density(ad.as_tensor(x), self.loc, self.scale)

    def sample(self, rng: np.random.Generator, n: int) -> np.ndarray:
        loc, scale = _values(self.loc), _values(self.scale)
        shape = (n, *np.broadcast_shapes(loc.shape, scale.shape))
        return loc + scale * rng.standard_normal(shape)


class HalfNormal(Distribution):
    """Normal(0, scale) folded onto [0, inf). Negative values get log density -inf."""

    def __init__(self, scale: Param):
        _check_scale(scale)
        self.scale = scale

    def log_prob(self, x: Union[Tensor, np.ndarray]) -> Tensor:
        x = ad.as_tensor(x)
        lp = _normal_log_density(x, 0.0, self.scale) + LOG_2
        outside = x.data < 0.0
        if np.any(outside):
            lp = ad.masked_fill(lp, outside, -np.inf)
        return lp

    def sample(self, rng: np.random.Generator, n: int) -> np.ndarray:
        scale = _values(self.scale)
        return np.abs(scale * rng.standard_normal((n, *scale.shape)))


class MvNormalDiag(Distribution):
    """Multivariate normal with diagonal covariance; the event axis is the last one."""

    def __init__(self, loc: Param, scale: Param):
        _check_scale(scale)
        self.loc = loc
        self.scale = scale

    @property
    def dim(self) -> int:
        return np.broadcast_shapes(_values(self.loc).shape, _values(self.scale).shape)[-1]

    def log_prob(self, x: Union[Tensor, np.ndarray]) -> Tensor:
        return ad.tsum(_normal_log_density(ad.as_tensor(x), self.loc, self.scale), axis=-1)

    def sample(self, rng: np.random.Generator, n: int) -> np.ndarray:
        loc, scale = _values(self.loc), _values(self.scale)
        return loc + scale * rng.standard_normal((n, self.dim))


class MixtureDiag(Distribution):
    """
    Finite mixture of diagonal normals.
    weights: (K,), means and scales: (K, D).
    """

    def __init__(self, weights: np.ndarray, means: Param, scales: Param):
        weights = np.asarray(weights, dtype=np.float64)
        if np.any(weights < 0.0) or abs(weights.sum() - 1.0) > 1e-12:
            raise ParameterError("mixture weights must be non-negative and sum to 1")
        _check_scale(scales, "component scales")
        self.weights = weights
        self.means = means
        self.scales = scales

    @property
    def n_components(self) -> int:
        return self.weights.shape[0]

    def log_prob(self, x: Union[Tensor, np.ndarray]) -> Tensor:
        """logsumexp_k [log w_k + log N(x; mu_k, diag(sigma_k^2))] for x of shape (..., D)."""
        x = ad.as_tensor(x)
        x = ad.reshape(x, (*x.shape[:-1], 1, x.shape[-1]))
        component_lp = ad.tsum(_normal_log_density(x, self.means, self.scales), axis=-1)
        with np.errstate(divide="ignore"):
            log_w = np.log(self.weights)
        return ad.logsumexp(component_lp + log_w, axis=-1)

    def sample_with_components(self, rng: np.random.Generator, n: int) -> tuple[np.ndarray, np.ndarray]:
        labels = rng.choice(self.n_components, size=n, p=self.weights)
        means, scales = _values(self.means), _values(self.scales)
        draws = means[labels] + scales[labels] * rng.standard_normal((n, means.shape[-1]))
        return draws, labels

    def sample(self, rng: np.random.Generator, n: int) -> np.ndarray:
        return self.sample_with_components(rng, n)[0]


def log_prob(dist: Distribution, x: Union[Tensor, np.ndarray]) -> Tensor:
    return dist.log_prob(x)


def sample(dist: Distribution, rng: np.random.Generator, n: int) -> np.ndarray:
    if n < 1:
        raise ParameterError("sample count must be >= 1")
    return dist.sample(rng, n)
