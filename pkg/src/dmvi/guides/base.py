"""
Guide contract shared by the DMVI, ADVI and NFVI variational families
"""

from abc import ABC, abstractmethod
from contextlib import AbstractContextManager, nullcontext
from typing import Any, Optional

import numpy as np

from dmvi import autodiff as ad
from dmvi.autodiff import Tensor
from dmvi.config import settings
from dmvi.errors import ConfigurationError
from dmvi.models import GenerativeModel
from dmvi.nn import ParamStore


def recording(train_mode: bool) -> AbstractContextManager:
    """Graph recording on for training draws, off otherwise."""
    return nullcontext() if train_mode else ad.no_grad()


class Guide(ABC):
    """
    A variational approximation q(xi) over the unconstrained parameters.

    sample()   draws xi, differentiable w.r.t. the guide parameters when train_mode is set
    evidence() the guide's log density of xi, or a lower-bound surrogate of it
    """

    kind: str = "guide"
    # True when evidence() is the exact log q(xi)
    exact_density: bool = True

    def __init__(self, dim: int, params: ParamStore):
        if dim < 1:
            raise ConfigurationError("guide dimension must be >= 1")
        self.dim = dim
        self.params = params

    @abstractmethod
    def sample(self, rng: np.random.Generator, n: int, train_mode: bool = False) -> Tensor:
        """(n, dim) draws. Without train_mode no graph is recorded."""

    @abstractmethod
    def evidence(self, xi: Tensor, rng: Optional[np.random.Generator] = None) -> Tensor:
        """One value per row of xi, shape (n,)."""

    def variational_term(self, xi: Tensor, rng: Optional[np.random.Generator] = None) -> Tensor:
        """
        The guide's contribution to the objective, added to the joint log density.

        Exact-density guides contribute -log q(xi); the diffusion guide contributes
        its evidence surrogate directly.
        """
        value = self.evidence(xi, rng)
        return -value if self.exact_density else value

    def header(self) -> dict[str, Any]:
        """Construction arguments needed to rebuild this guide from a checkpoint."""
        return {}

    def posterior_draws(
        self,
        model: GenerativeModel,
        rng: np.random.Generator,
        n: Optional[int] = None,
        chunk: Optional[int] = None,
    ) -> np.ndarray:
        """n constrained-space draws laid out per the model's blocks."""
        n = settings.POSTERIOR_DRAWS if n is None else n
        chunk = settings.SAMPLE_CHUNK if chunk is None else chunk
        if model.dim != self.dim:
            raise ConfigurationError(f"guide has dim {self.dim}, model {model.name} has dim {model.dim}")
        if n < 1:
            raise ConfigurationError("posterior draw count must be >= 1")

        pieces = []
        with ad.no_grad():
            for start in range(0, n, chunk):
                pieces.append(self.sample(rng, min(chunk, n - start)).data)
        return model.constrain(np.concatenate(pieces, axis=0))

    def __repr__(self) -> str:
        return f"{type(self).__name__}(dim={self.dim}, parameters={self.params.num_parameters()})"
