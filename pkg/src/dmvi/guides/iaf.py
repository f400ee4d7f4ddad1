"""
Inverse autoregressive flow guide (NFVI)

Stack: IAF(MADE) -> index reversal -> IAF(MADE) -> index reversal on top of a
N(0, I) base.
Each IAF layer maps x -> x * exp(log_scale(x)) + shift(x), where output i of
the MADE sees only inputs with index < i. Every MADE weight starts at zero, so
a fresh flow is the identity map.
"""

from dataclasses import dataclass
from typing import Any, Optional

import numpy as np
import structlog

from dmvi import autodiff as ad
from dmvi.autodiff import Tensor
from dmvi.config import settings
from dmvi.distributions import HALF_LOG_2PI
from dmvi.errors import ConfigurationError
from dmvi.guides.base import Guide, recording
from dmvi.nn import ParamStore, dense

logger = structlog.get_logger(__name__)

N_LAYERS = 2


# =============================================================================
# MADE
# =============================================================================

def made_masks(dim: int, hidden_dim: int) -> tuple[np.ndarray, np.ndarray]:
    """
    Input->hidden and hidden->output masks with strict autoregressive order.

    Input and output units carry degrees 1..d, hidden units degrees in 1..d-1.
    A hidden unit sees inputs of degree <= its own; output i sees hidden units of
    degree < i, so output i depends on inputs 1..i-1 only.
    """
    in_degrees = np.arange(1, dim + 1)
    if dim > 1:
        hidden_degrees = np.arange(hidden_dim) % (dim - 1) + 1
    else:
        # nothing precedes the only coordinate: hidden units carry no input
        hidden_degrees = np.zeros(hidden_dim, dtype=np.int64)
    out_degrees = np.arange(1, dim + 1)
    hidden_mask = (hidden_degrees[None, :] >= in_degrees[:, None]).astype(np.float64)
    output_mask = (out_degrees[None, :] > hidden_degrees[:, None]).astype(np.float64)
    return hidden_mask, output_mask


@dataclass
class MADELayer:
    """Parameter names and masks of one IAF layer."""

    prefix: str
    hidden_mask: np.ndarray
    output_mask: np.ndarray

    def register(self, params: ParamStore, dim: int, hidden_dim: int) -> None:
        params.add(f"{self.prefix}.hidden.w", np.zeros((dim, hidden_dim)))
        params.add(f"{self.prefix}.hidden.b", np.zeros(hidden_dim))
        params.add(f"{self.prefix}.shift.w", np.zeros((hidden_dim, dim)))
        params.add(f"{self.prefix}.shift.b", np.zeros(dim))
        params.add(f"{self.prefix}.log_scale.w", np.zeros((hidden_dim, dim)))
        params.add(f"{self.prefix}.log_scale.b", np.zeros(dim))

    def shift_and_log_scale(self, params: ParamStore, x: Tensor, clamp: float) -> tuple[Tensor, Tensor]:
        p = self.prefix
        h = ad.gelu(dense(x, params[f"{p}.hidden.w"] * self.hidden_mask, params[f"{p}.hidden.b"]))
        shift = dense(h, params[f"{p}.shift.w"] * self.output_mask, params[f"{p}.shift.b"])
        raw = dense(h, params[f"{p}.log_scale.w"] * self.output_mask, params[f"{p}.log_scale.b"])
        return shift, ad.clip(raw, -clamp, clamp)

    def forward(self, params: ParamStore, x: Tensor, clamp: float) -> tuple[Tensor, Tensor]:
        """(y, log|det J|) with the log-det summed per row."""
        shift, log_scale = self.shift_and_log_scale(params, x, clamp)
        return x * ad.exp(log_scale) + shift, ad.tsum(log_scale, axis=-1)

    def inverse(self, params: ParamStore, y: Tensor, clamp: float) -> tuple[Tensor, Tensor]:
        """(x, forward log|det J| at x); d fixed-point sweeps recover x exactly."""
        x: Tensor = Tensor(np.zeros(y.shape))
        for _ in range(y.shape[-1]):
            shift, log_scale = self.shift_and_log_scale(params, x, clamp)
            x = (y - shift) * ad.exp(-log_scale)
        _, log_scale = self.shift_and_log_scale(params, x, clamp)
        return x, ad.tsum(log_scale, axis=-1)

    def is_zero(self, params: ParamStore) -> bool:
        names = ("shift.w", "shift.b", "log_scale.w", "log_scale.b")
        return all(not np.any(params[f"{self.prefix}.{n}"].data) for n in names)

    def is_masked_path_zero(self, params: ParamStore) -> bool:
        return not np.any(params[f"{self.prefix}.shift.w"].data) and not np.any(params[f"{self.prefix}.log_scale.w"].data)


# =============================================================================
# GUIDE
# =============================================================================

def _reverse(x: Tensor) -> Tensor:
    return x[:, np.arange(x.shape[-1])[::-1]]


def _base_log_prob(eps: Tensor) -> Tensor:
    return ad.tsum(-0.5 * eps * eps - HALF_LOG_2PI, axis=-1)


class IAFGuide(Guide):
    """Two-layer IAF; each layer is followed by a reversal of the coordinate order."""

    kind = "nfvi"

    def __init__(
        self,
        dim: int,
        hidden_dim: Optional[int] = None,
        log_scale_clamp: Optional[float] = None,
        params: Optional[ParamStore] = None,
    ):
        self.hidden_dim = settings.HIDDEN_DIM if hidden_dim is None else hidden_dim
        self.log_scale_clamp = settings.IAF_LOG_SCALE_CLAMP if log_scale_clamp is None else log_scale_clamp
        if self.hidden_dim < 1:
            raise ConfigurationError("MADE hidden width must be >= 1")

        hidden_mask, output_mask = made_masks(dim, self.hidden_dim)
        self.layers = [MADELayer(f"iaf{k}", hidden_mask, output_mask) for k in range(N_LAYERS)]
        if params is None:
            params = ParamStore()
            for layer in self.layers:
                layer.register(params, dim, self.hidden_dim)
        super().__init__(dim, params)
        # last (xi, log q) pair produced by sample(); evidence() of that exact xi reuses it
        self._cache: Optional[tuple[Tensor, Tensor]] = None

    def header(self) -> dict[str, Any]:
        return {"hidden_dim": self.hidden_dim, "log_scale_clamp": self.log_scale_clamp}

    def forward(self, eps: Tensor) -> tuple[Tensor, Tensor]:
        eps = ad.as_tensor(eps)
        if eps.ndim != 2 or eps.shape[1] != self.dim:
            raise ConfigurationError(f"IAF guide expects (*, {self.dim}), got {eps.shape}")
        x, log_det_1 = self.layers[0].forward(self.params, eps, self.log_scale_clamp)
        x, log_det_2 = self.layers[1].forward(self.params, _reverse(x), self.log_scale_clamp)
        return _reverse(x), log_det_1 + log_det_2

    def inverse(self, xi: Tensor) -> tuple[Tensor, Tensor]:
        """(eps, forward log-det at eps) for each row of xi."""
        xi = ad.as_tensor(xi)
        if xi.ndim != 2 or xi.shape[1] != self.dim:
            raise ConfigurationError(f"IAF guide expects (*, {self.dim}), got {xi.shape}")
        u, log_det_2 = self.layers[1].inverse(self.params, _reverse(xi), self.log_scale_clamp)
        eps, log_det_1 = self.layers[0].inverse(self.params, _reverse(u), self.log_scale_clamp)
        return eps, log_det_1 + log_det_2

    def sample(self, rng: np.random.Generator, n: int, train_mode: bool = False) -> Tensor:
        eps = Tensor(rng.standard_normal((n, self.dim)))
        with recording(train_mode):
            xi, log_det = self.forward(eps)
            self._cache = (xi, _base_log_prob(eps) - log_det)
        return xi

    def evidence(self, xi: Tensor, rng: Optional[np.random.Generator] = None) -> Tensor:
        if self._cache is not None and self._cache[0] is xi:
            return self._cache[1]
        squeeze = ad.as_tensor(xi).ndim == 1
        xi = ad.reshape(ad.as_tensor(xi), (1, -1)) if squeeze else ad.as_tensor(xi)
        eps, log_det = self.inverse(xi)
        log_q = _base_log_prob(eps) - log_det
        return ad.reshape(log_q, ()) if squeeze else log_q

    def is_identity(self) -> bool:
        """True while every MADE output weight and bias is still exactly zero."""
        return all(layer.is_zero(self.params) for layer in self.layers)

    def has_autoregressive_path(self) -> bool:
        """True once any masked output weight has left zero."""
        return not all(layer.is_masked_path_zero(self.params) for layer in self.layers)

    def report(self) -> None:
        logger.info(
            "🔁 Flow state",
            identity=self.is_identity(),
            autoregressive=self.has_autoregressive_path(),
        )


def iaf_forward(guide: IAFGuide, eps: np.ndarray) -> tuple[Tensor, Tensor]:
    return guide.forward(Tensor(np.atleast_2d(eps)))


def iaf_evidence(guide: IAFGuide, xi: Tensor) -> Tensor:
    return guide.evidence(xi)
