"""
Variational guides: DMVI (diffusion), ADVI (mean-field Gaussian), NFVI (IAF flow)
"""

from typing import Optional

import numpy as np

from dmvi.errors import ConfigurationError
from dmvi.guides.advi import ADVIGuide
from dmvi.guides.base import Guide
from dmvi.guides.diffusion import DiffusionGuide
from dmvi.guides.iaf import IAFGuide
from dmvi.solver import SolverConfig

METHODS = ("ADVI", "DMVI", "NFVI")


def build_guide(
    method: str,
    dim: int,
    rng: Optional[np.random.Generator] = None,
    n_diffusion: Optional[int] = None,
    solver_steps: Optional[int] = None,
    solver_order: Optional[int] = None,
) -> Guide:
    """Freshly initialized guide for method ADVI, DMVI or NFVI (case-insensitive)."""
    key = method.upper()
    if key == "ADVI":
        return ADVIGuide(dim)
    if key == "NFVI":
        return IAFGuide(dim)
    if key == "DMVI":
        solver_args = {}
        if solver_steps is not None:
            solver_args["steps"] = solver_steps
        if solver_order is not None:
            solver_args["order"] = solver_order
        try:
            solver = SolverConfig(**solver_args)
        except ValueError as e:
            raise ConfigurationError(f"invalid solver configuration: {e}") from e
        return DiffusionGuide(dim, rng=rng, n_diffusion=n_diffusion, solver=solver)
    raise ConfigurationError(f"unknown method: {method} (choose from {', '.join(METHODS)})")


__all__ = ["ADVIGuide", "DiffusionGuide", "Guide", "IAFGuide", "METHODS", "build_guide"]
