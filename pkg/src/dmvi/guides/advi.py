"""
Mean-field Gaussian guide (ADVI)
"""

from typing import Optional

import numpy as np

from dmvi import autodiff as ad
from dmvi.autodiff import Tensor
from dmvi.distributions import HALF_LOG_2PI
from dmvi.errors import ConfigurationError
from dmvi.guides.base import Guide, recording
from dmvi.nn import ParamStore


class ADVIGuide(Guide):
    """q(xi) = N(m, diag(exp(s))^2), starting from m = 0, s = 0."""

    kind = "advi"

    def __init__(self, dim: int, params: Optional[ParamStore] = None):
        if params is None:
            params = ParamStore()
            params.add("advi.loc", np.zeros(dim))
            params.add("advi.log_scale", np.zeros(dim))
        super().__init__(dim, params)

    @property
    def loc(self) -> Tensor:
        return self.params["advi.loc"]

    @property
    def log_scale(self) -> Tensor:
        return self.params["advi.log_scale"]

    def sample(self, rng: np.random.Generator, n: int, train_mode: bool = False) -> Tensor:
        eps = rng.standard_normal((n, self.dim))
        with recording(train_mode):
            return self.loc + ad.exp(self.log_scale) * eps

    def evidence(self, xi: Tensor, rng: Optional[np.random.Generator] = None) -> Tensor:
        xi = ad.as_tensor(xi)
        if xi.shape[-1] != self.dim:
            raise ConfigurationError(f"ADVI guide expects width {self.dim}, got {xi.shape}")
        z = (xi - self.loc) / ad.exp(self.log_scale)
        return ad.tsum(-0.5 * z * z - self.log_scale - HALF_LOG_2PI, axis=-1)


def advi_sample(guide: ADVIGuide, rng: np.random.Generator, n: int) -> Tensor:
    return guide.sample(rng, n, train_mode=True)


def advi_evidence(guide: ADVIGuide, xi: Tensor) -> Tensor:
    return guide.evidence(xi)
