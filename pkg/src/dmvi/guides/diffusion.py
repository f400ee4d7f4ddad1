"""
Diffusion-model guide (DMVI)

sample():   w_T ~ N(0, I), then the probability-flow ODE down to t=1 with the
            learned noise model; a deterministic, differentiable map of (w_T, phi).
evidence(): negative simplified denoising loss -||eps - eps_phi(alpha_t xi + sigma_t eps, t)||^2
            for one uniformly drawn t and one eps per row.
"""

from typing import Any, Optional

import numpy as np

from dmvi import autodiff as ad
from dmvi.autodiff import Tensor
from dmvi.config import settings
from dmvi.errors import ConfigurationError
from dmvi.guides.base import Guide, recording
from dmvi.nn import MLPConfig, ParamStore, ScoreNetwork
from dmvi.schedule import NoiseSchedule, make_linear_schedule, perturb
from dmvi.solver import SolverConfig, dpm_solve


class DiffusionGuide(Guide):
    kind = "dmvi"
    exact_density = False

    def __init__(
        self,
        dim: int,
        rng: Optional[np.random.Generator] = None,
        n_diffusion: Optional[int] = None,
        solver: Optional[SolverConfig] = None,
        beta_min: Optional[float] = None,
        beta_max: Optional[float] = None,
        mlp: Optional[MLPConfig] = None,
        params: Optional[ParamStore] = None,
    ):
        self.beta_min = settings.BETA_MIN if beta_min is None else beta_min
        self.beta_max = settings.BETA_MAX if beta_max is None else beta_max
        self.schedule: NoiseSchedule = make_linear_schedule(
            settings.N_DIFFUSION if n_diffusion is None else n_diffusion, self.beta_min, self.beta_max
        )
        self.solver = solver if solver is not None else SolverConfig()
        self.mlp = mlp if mlp is not None else MLPConfig(input_dim=dim, output_dim=dim)
        if self.mlp.output_dim != dim:
            raise ConfigurationError(f"score network output {self.mlp.output_dim} != guide dimension {dim}")
        self.network = ScoreNetwork(self.mlp, self.schedule.n_steps, rng=rng, params=params)
        super().__init__(dim, self.network.params)

    @property
    def n_diffusion(self) -> int:
        return self.schedule.n_steps

    def header(self) -> dict[str, Any]:
        return {
            "n_diffusion": self.n_diffusion,
            "beta_min": self.beta_min,
            "beta_max": self.beta_max,
            "solver": self.solver.model_dump(),
            "mlp": self.mlp.model_dump(),
        }

    def predict_noise(self, x: Tensor, tau: float) -> Tensor:
        """Noise prediction at fractional time tau, conditioned on the nearest discrete step."""
        return self.network(x, int(self.schedule.nearest_step(tau)), train_mode=False)

    def sample(self, rng: np.random.Generator, n: int, train_mode: bool = False) -> Tensor:
        w_T = Tensor(rng.standard_normal((n, self.dim)))
        with recording(train_mode):
            return dpm_solve(self.predict_noise, self.schedule, w_T, self.solver)

    def evidence(self, xi: Tensor, rng: Optional[np.random.Generator] = None) -> Tensor:
        if rng is None:
            raise ConfigurationError("diffusion evidence needs a random stream")
        xi = ad.as_tensor(xi)
        squeeze = xi.ndim == 1
        if squeeze:
            xi = ad.reshape(xi, (1, -1))
        if xi.shape[1] != self.dim:
            raise ConfigurationError(f"diffusion guide expects width {self.dim}, got {xi.shape}")

        n = xi.shape[0]
        t = rng.integers(1, self.schedule.n_steps + 1, size=n)
        eps = rng.standard_normal((n, self.dim))
        y_t = perturb(self.schedule, xi, t, eps)
        residual = self.network(y_t, t, train_mode=True, rng=rng) - eps
        value = -ad.tsum(residual * residual, axis=-1)
        return ad.reshape(value, ()) if squeeze else value
