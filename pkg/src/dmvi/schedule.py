"""
Discrete variance-preserving noise schedule

alpha_bar_t = prod_{s<=t} (1 - beta_s), alpha_t = sqrt(alpha_bar_t), sigma_t = sqrt(1 - alpha_bar_t)
for t = 1..T. The continuous helpers (half log-SNR lambda, fractional time) bridge
the discrete schedule to the ODE solver.
"""

from dataclasses import dataclass, field
from typing import Union

import numpy as np

from dmvi import autodiff as ad
from dmvi.autodiff import Tensor
from dmvi.errors import ConfigurationError


@dataclass(frozen=True, eq=False)
class NoiseSchedule:
    betas: np.ndarray
    alpha_bars: np.ndarray = field(init=False)
    alphas: np.ndarray = field(init=False)
    sigmas: np.ndarray = field(init=False)
    lambdas: np.ndarray = field(init=False)

    def __post_init__(self):
        betas = np.asarray(self.betas, dtype=np.float64)
        if betas.ndim != 1 or betas.size < 2:
            raise ConfigurationError("noise schedule needs at least two steps")
        if np.any(betas <= 0.0) or np.any(betas >= 1.0):
            raise ConfigurationError("betas must lie in (0, 1)")
        alpha_bars = np.cumprod(1.0 - betas)
        alphas = np.sqrt(alpha_bars)
        # sqrt(1 - abar) computed as sqrt(-expm1(log abar)) keeps sigma_1 accurate
        sigmas = np.sqrt(-np.expm1(np.cumsum(np.log1p(-betas))))
        object.__setattr__(self, "betas", betas)
        object.__setattr__(self, "alpha_bars", alpha_bars)
        object.__setattr__(self, "alphas", alphas)
        object.__setattr__(self, "sigmas", sigmas)
        object.__setattr__(self, "lambdas", np.log(alphas) - np.log(sigmas))

    @classmethod
    def from_betas(cls, betas: np.ndarray) -> "NoiseSchedule":
        return cls(betas=np.asarray(betas, dtype=np.float64))

    @property
    def n_steps(self) -> int:
        return self.betas.size

    def alpha(self, t: Union[int, np.ndarray]) -> np.ndarray:
        return self.alphas[np.asarray(t) - 1]

    def sigma(self, t: Union[int, np.ndarray]) -> np.ndarray:
        return self.sigmas[np.asarray(t) - 1]

    # --- continuous bridge ---

    @staticmethod
    def alpha_sigma_from_lambda(lam: float) -> tuple[float, float]:
        """alpha = (1 + e^{-2 lambda})^{-1/2}, sigma = (1 + e^{2 lambda})^{-1/2}."""
        alpha = np.exp(-0.5 * np.logaddexp(0.0, -2.0 * lam))
        sigma = np.exp(-0.5 * np.logaddexp(0.0, 2.0 * lam))
        return float(alpha), float(sigma)

    def time_from_lambda(self, lam: float) -> float:
        """Fractional time in [1, T] by piecewise-linear interpolation of lambda_t."""
        steps = np.arange(1, self.n_steps + 1, dtype=np.float64)
        return float(np.interp(lam, self.lambdas[::-1], steps[::-1]))

    def lambda_at_time(self, tau: float) -> float:
        steps = np.arange(1, self.n_steps + 1, dtype=np.float64)
        return float(np.interp(tau, steps, self.lambdas))

    def nearest_step(self, tau: Union[float, np.ndarray]) -> np.ndarray:
        return np.clip(np.rint(tau), 1, self.n_steps).astype(np.int64)


def make_linear_schedule(n_steps: int, beta_min: float, beta_max: float) -> NoiseSchedule:
    """Betas linear from beta_min (t=1) to beta_max (t=T)."""
    if n_steps < 2:
        raise ConfigurationError("T must be >= 2")
    if not 0.0 < beta_min < beta_max < 1.0:
        raise ConfigurationError("need 0 < beta_min < beta_max < 1")
    return NoiseSchedule(betas=np.linspace(beta_min, beta_max, n_steps))


def perturb(
    schedule: NoiseSchedule,
    y0: Union[Tensor, np.ndarray],
    t: Union[int, np.ndarray],
    eps: Union[Tensor, np.ndarray],
) -> Tensor:
    """y_t = alpha_t * y0 + sigma_t * eps; a per-row t broadcasts over the last axis."""
    t_arr = np.asarray(t)
    if t_arr.size and (t_arr.min() < 1 or t_arr.max() > schedule.n_steps):
        raise ConfigurationError(f"diffusion time outside [1, {schedule.n_steps}]")
    alpha = schedule.alpha(t_arr)
    sigma = schedule.sigma(t_arr)
    if t_arr.ndim == 1:
        alpha, sigma = alpha[:, None], sigma[:, None]
    return ad.as_tensor(y0) * alpha + ad.as_tensor(eps) * sigma
