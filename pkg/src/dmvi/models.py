#!/usr/bin/env python3
"""
Benchmark generative models

- mean:            y_n ~ MvNormal(mu, I), mu ~ MvNormal(0, I)
- mixture:         bivariate, K=3, fixed uniform weights, diagonal covariances
- hierarchical1-5: two-level normal hierarchies with half-normal scales

Each model owns a fixed parameter layout (ordered blocks with a bijector each),
a simulator, and the unconstrained-space joint log density
log p(y, f^-1(xi)) + log|det J_{f^-1}(xi)|.
"""

import functools
import itertools
import math
from abc import ABC, abstractmethod
from collections.abc import Callable
from dataclasses import dataclass
from typing import Union

import numpy as np
from scipy.special import logsumexp as np_logsumexp

from dmvi import autodiff as ad
from dmvi.autodiff import Tensor
from dmvi.bijectors import IDENTITY, LOG_EXP, Bijector
from dmvi.datasets import Dataset
from dmvi.distributions import HalfNormal, MixtureDiag, MvNormalDiag, Normal
from dmvi.errors import ConfigurationError, NumericFailureError

Theta = dict[str, Tensor]


@dataclass(frozen=True)
class ParameterBlock:
    """One named latent block; its entries occupy a contiguous slice of xi."""

    name: str
    shape: tuple[int, ...]
    bijector: Bijector

    @property
    def size(self) -> int:
        return math.prod(self.shape)


class GenerativeModel(ABC):
    """Prior, likelihood, simulator and parameter layout of one benchmark model."""

    name: str = "model"

    def __init__(self, blocks: list[ParameterBlock], data_dim: int):
        self.blocks = blocks
        self.data_dim = data_dim
        offsets = np.cumsum([0] + [b.size for b in blocks])
        self.slices = {b.name: slice(int(lo), int(hi)) for b, lo, hi in zip(blocks, offsets[:-1], offsets[1:])}

    @property
    def dim(self) -> int:
        """Flattened unconstrained dimension d."""
        return sum(b.size for b in self.blocks)

    def describe(self) -> str:
        layout = ", ".join(f"{b.name}{list(b.shape)}:{b.bijector.name}" for b in self.blocks)
        return f"{self.name} (d={self.dim}, data_dim={self.data_dim}): {layout}"

    # --- model definition ---

    @abstractmethod
    def sample_prior(self, rng: np.random.Generator) -> dict[str, np.ndarray]:
        """One constrained draw of every block, shaped per the layout."""

    @abstractmethod
    def sample_observations(self, theta: dict[str, np.ndarray], rng: np.random.Generator, n: int) -> np.ndarray:
        """n observation rows of width data_dim given constrained parameters."""

    @abstractmethod
    def log_prior(self, theta: Theta) -> dict[str, Tensor]:
        """Per-block prior log density, each of shape (M,), for blocks shaped (M, *block.shape)."""

    @abstractmethod
    def log_likelihood(self, theta: Theta, y: np.ndarray) -> Tensor:
        """Sum over the rows of y of the observation log density, shape (M,)."""

    # --- layout helpers ---

    def flatten(self, theta: dict[str, np.ndarray]) -> np.ndarray:
        return np.concatenate([np.asarray(theta[b.name], dtype=np.float64).reshape(-1) for b in self.blocks])

    def unflatten(self, flat: np.ndarray) -> dict[str, np.ndarray]:
        flat = np.asarray(flat, dtype=np.float64)
        lead = flat.shape[:-1]
        return {b.name: flat[..., self.slices[b.name]].reshape(*lead, *b.shape) for b in self.blocks}

    def unconstrain(self, theta_flat: np.ndarray) -> np.ndarray:
        theta_flat = np.asarray(theta_flat, dtype=np.float64)
        return np.concatenate(
            [b.bijector.forward(theta_flat[..., self.slices[b.name]]) for b in self.blocks], axis=-1
        )

    def constrain(self, xi: np.ndarray) -> np.ndarray:
        xi = np.asarray(xi, dtype=np.float64)
        return np.concatenate([b.bijector.inverse(xi[..., self.slices[b.name]]) for b in self.blocks], axis=-1)

    # --- operations ---

    def simulate(self, rng: Union[np.random.Generator, int], n: int) -> Dataset:
        """Draw theta_true from the prior, then n observations from the likelihood."""
        if n < 1:
            raise ConfigurationError("data set size must be >= 1")
        seed = rng if isinstance(rng, (int, np.integer)) else None
        gen = np.random.default_rng(rng) if seed is not None else rng
        theta = self.sample_prior(gen)
        observations = self.sample_observations(theta, gen, n)
        return Dataset(
            model_name=self.name,
            observations=observations,
            theta_true=self.flatten(theta),
            seed=None if seed is None else int(seed),
        )

    def log_joint_unconstrained(
        self,
        xi: Union[Tensor, np.ndarray],
        batch: np.ndarray,
        scale: float = 1.0,
    ) -> Tensor:
        """
        log prior(f^-1(xi)) + scale * sum_batch log lik + sum of log-det-inverse terms.

        xi of shape (d,) gives a scalar; (M, d) gives one value per row.
        """
        xi = ad.as_tensor(xi)
        squeeze = xi.ndim == 1
        if squeeze:
            xi = ad.reshape(xi, (1, -1))
        if xi.ndim != 2 or xi.shape[1] != self.dim:
            raise ConfigurationError(f"{self.name} expects xi of width {self.dim}, got {xi.shape}")
        m = xi.shape[0]

        theta: Theta = {}
        total: Tensor = Tensor(np.zeros(m))
        for block in self.blocks:
            xi_block = xi[:, self.slices[block.name]]
            theta[block.name] = ad.reshape(block.bijector.inverse(xi_block), (m, *block.shape))
            total = total + block.bijector.log_det_inverse(xi_block)

        for block_name, term in self.log_prior(theta).items():
            _check_finite(term, f"{self.name} prior block '{block_name}'")
            total = total + term

        likelihood = self.log_likelihood(theta, np.asarray(batch, dtype=np.float64))
        _check_finite(likelihood, f"{self.name} likelihood")
        total = total + scale * likelihood

        return ad.reshape(total, ()) if squeeze else total


def _check_finite(term: Tensor, where: str) -> None:
    if not np.all(np.isfinite(term.data)):
        raise NumericFailureError("non-finite log density", where=where)


def _sum_trailing(t: Tensor, keep: int = 1) -> Tensor:
    while t.ndim > keep:
        t = ad.tsum(t, axis=-1)
    return t


# =============================================================================
# MEAN MODEL
# =============================================================================

class MeanModel(GenerativeModel):
    """Conjugate Gaussian mean model (d_y = 10 unless overridden)."""

    name = "mean"

    def __init__(self, data_dim: int = 10):
        super().__init__([ParameterBlock("mu", (data_dim,), IDENTITY)], data_dim)

    def sample_prior(self, rng: np.random.Generator) -> dict[str, np.ndarray]:
        return {"mu": rng.standard_normal(self.data_dim)}

    def sample_observations(self, theta: dict[str, np.ndarray], rng: np.random.Generator, n: int) -> np.ndarray:
        return theta["mu"] + rng.standard_normal((n, self.data_dim))

    def log_prior(self, theta: Theta) -> dict[str, Tensor]:
        return {"mu": MvNormalDiag(0.0, np.ones(self.data_dim)).log_prob(theta["mu"])}

    def log_likelihood(self, theta: Theta, y: np.ndarray) -> Tensor:
        mu = ad.reshape(theta["mu"], (theta["mu"].shape[0], 1, self.data_dim))
        return _sum_trailing(Normal(mu, 1.0).log_prob(y[None, :, :]))

    @staticmethod
    def analytic_posterior(dataset: Dataset) -> tuple[np.ndarray, np.ndarray]:
        """Exact posterior mean ybar*N/(N+1) and variance 1/(N+1) per coordinate."""
        n = dataset.n
        y_bar = dataset.observations.mean(axis=0)
        return y_bar * n / (n + 1.0), np.full_like(y_bar, 1.0 / (n + 1.0))

    @staticmethod
    def analytic_log_evidence(dataset: Dataset) -> float:
        """log p(y): per coordinate the N observations are jointly N(0, I + 11^T)."""
        y = dataset.observations
        n = y.shape[0]
        quad = (y**2).sum(axis=0) - y.sum(axis=0) ** 2 / (n + 1.0)
        per_coord = -0.5 * n * math.log(2.0 * math.pi) - 0.5 * math.log(n + 1.0) - 0.5 * quad
        return float(per_coord.sum())


# =============================================================================
# MIXTURE MODEL
# =============================================================================

def mixture_log_likelihood(
    weights: np.ndarray,
    means: Union[np.ndarray, Tensor],
    sigmas: Union[np.ndarray, Tensor],
    y: np.ndarray,
) -> Tensor:
    """
    logsumexp_k [log pi_k + log MvNormalDiag(y; mu_k, sigma_k)] for one 2-vector y.

    y may also be a stack (..., 2); means and sigmas broadcast against it as (..., K, 2).
    """
    return MixtureDiag(weights, means, sigmas).log_prob(np.asarray(y, dtype=np.float64))


class MixtureModel(GenerativeModel):
    """Bivariate Gaussian mixture with K=3 components and fixed uniform weights."""

    name = "mixture"
    n_components = 3
    event_dim = 2

    def __init__(self):
        shape = (self.n_components, self.event_dim)
        super().__init__(
            [ParameterBlock("mu", shape, IDENTITY), ParameterBlock("sigma", shape, LOG_EXP)],
            self.event_dim,
        )
        self.weights = np.full(self.n_components, 1.0 / self.n_components)

    def sample_prior(self, rng: np.random.Generator) -> dict[str, np.ndarray]:
        shape = (self.n_components, self.event_dim)
        return {
            "mu": rng.standard_normal(shape),
            "sigma": np.abs(rng.standard_normal(shape)),
        }

    def sample_observations(self, theta: dict[str, np.ndarray], rng: np.random.Generator, n: int) -> np.ndarray:
        return MixtureDiag(self.weights, theta["mu"], theta["sigma"]).sample(rng, n)

    def log_prior(self, theta: Theta) -> dict[str, Tensor]:
        return {
            "mu": _sum_trailing(Normal(0.0, 1.0).log_prob(theta["mu"])),
            "sigma": _sum_trailing(HalfNormal(1.0).log_prob(theta["sigma"])),
        }

    def log_likelihood(self, theta: Theta, y: np.ndarray) -> Tensor:
        m = theta["mu"].shape[0]
        shape = (m, 1, self.n_components, self.event_dim)
        per_obs = mixture_log_likelihood(
            self.weights, ad.reshape(theta["mu"], shape), ad.reshape(theta["sigma"], shape), y
        )
        return ad.tsum(per_obs, axis=-1)

    def component_permutations(self) -> list[tuple[int, ...]]:
        return list(itertools.permutations(range(self.n_components)))

    def naive_log_likelihood(self, theta_flat: np.ndarray, y: np.ndarray) -> float:
        """Reference value without the autodiff graph (used for cross-checks)."""
        theta = self.unflatten(theta_flat)
        mu, sigma = theta["mu"], theta["sigma"]
        comp = -0.5 * (((y[:, None, :] - mu) / sigma) ** 2).sum(-1) - np.log(sigma).sum(-1) - math.log(2 * math.pi)
        return float(np_logsumexp(comp + np.log(self.weights), axis=-1).sum())


# =============================================================================
# HIERARCHICAL MODELS
# =============================================================================

class HierarchicalModel(GenerativeModel):
    """
    gamma_i ~ Normal(mu_gamma, sigma_gamma^2)           i = 1..n_groups
    beta_ij ~ Normal(gamma_i, sigma_beta^2)             j = 1..n_members
    y_ijn   ~ Normal(beta_ij, sigma^2)                  n = 1..N

    Each of mu_gamma, sigma_gamma, sigma_beta, sigma is either a latent block
    (Normal(0,1) or HalfNormal(1) prior) or fixed at 0 / 1. Observation rows hold
    all n_groups * n_members cells, so mini-batches subsample n only.
    """

    def __init__(
        self,
        name: str,
        n_groups: int,
        n_members: int,
        learn_mu_gamma: bool,
        learn_sigma_gamma: bool,
        learn_sigma_beta: bool,
        learn_sigma: bool,
    ):
        self.name = name
        self.n_groups = n_groups
        self.n_members = n_members
        self.learn_mu_gamma = learn_mu_gamma
        self.learn_sigma_gamma = learn_sigma_gamma
        self.learn_sigma_beta = learn_sigma_beta
        self.learn_sigma = learn_sigma

        blocks: list[ParameterBlock] = []
        if learn_mu_gamma:
            blocks.append(ParameterBlock("mu_gamma", (1,), IDENTITY))
        if learn_sigma_gamma:
            blocks.append(ParameterBlock("sigma_gamma", (1,), LOG_EXP))
        blocks.append(ParameterBlock("gamma", (n_groups,), IDENTITY))
        if learn_sigma_beta:
            blocks.append(ParameterBlock("sigma_beta", (1,), LOG_EXP))
        blocks.append(ParameterBlock("beta", (n_groups, n_members), IDENTITY))
        if learn_sigma:
            blocks.append(ParameterBlock("sigma", (1,), LOG_EXP))
        super().__init__(blocks, n_groups * n_members)

    def sample_prior(self, rng: np.random.Generator) -> dict[str, np.ndarray]:
        theta: dict[str, np.ndarray] = {}
        mu_gamma = rng.standard_normal(1) if self.learn_mu_gamma else np.zeros(1)
        sigma_gamma = np.abs(rng.standard_normal(1)) if self.learn_sigma_gamma else np.ones(1)
        gamma = mu_gamma + sigma_gamma * rng.standard_normal(self.n_groups)
        sigma_beta = np.abs(rng.standard_normal(1)) if self.learn_sigma_beta else np.ones(1)
        beta = gamma[:, None] + sigma_beta * rng.standard_normal((self.n_groups, self.n_members))
        sigma = np.abs(rng.standard_normal(1)) if self.learn_sigma else np.ones(1)

        if self.learn_mu_gamma:
            theta["mu_gamma"] = mu_gamma
        if self.learn_sigma_gamma:
            theta["sigma_gamma"] = sigma_gamma
        theta["gamma"] = gamma
        if self.learn_sigma_beta:
            theta["sigma_beta"] = sigma_beta
        theta["beta"] = beta
        if self.learn_sigma:
            theta["sigma"] = sigma
        return theta

    def sample_observations(self, theta: dict[str, np.ndarray], rng: np.random.Generator, n: int) -> np.ndarray:
        sigma = theta["sigma"] if self.learn_sigma else np.ones(1)
        return theta["beta"].reshape(-1) + sigma * rng.standard_normal((n, self.data_dim))

    def log_prior(self, theta: Theta) -> dict[str, Tensor]:
        m = theta["gamma"].shape[0]
        terms: dict[str, Tensor] = {}

        if self.learn_mu_gamma:
            terms["mu_gamma"] = _sum_trailing(Normal(0.0, 1.0).log_prob(theta["mu_gamma"]))
            mu_gamma = theta["mu_gamma"]
        else:
            mu_gamma = 0.0
        if self.learn_sigma_gamma:
            terms["sigma_gamma"] = _sum_trailing(HalfNormal(1.0).log_prob(theta["sigma_gamma"]))
            sigma_gamma = theta["sigma_gamma"]
        else:
            sigma_gamma = 1.0
        terms["gamma"] = _sum_trailing(Normal(mu_gamma, sigma_gamma).log_prob(theta["gamma"]))

        if self.learn_sigma_beta:
            terms["sigma_beta"] = _sum_trailing(HalfNormal(1.0).log_prob(theta["sigma_beta"]))
            sigma_beta = ad.reshape(theta["sigma_beta"], (m, 1, 1))
        else:
            sigma_beta = 1.0
        gamma = ad.reshape(theta["gamma"], (m, self.n_groups, 1))
        terms["beta"] = _sum_trailing(Normal(gamma, sigma_beta).log_prob(theta["beta"]))

        if self.learn_sigma:
            terms["sigma"] = _sum_trailing(HalfNormal(1.0).log_prob(theta["sigma"]))
        return terms

    def log_likelihood(self, theta: Theta, y: np.ndarray) -> Tensor:
        m = theta["beta"].shape[0]
        loc = ad.reshape(theta["beta"], (m, 1, self.data_dim))
        scale = ad.reshape(theta["sigma"], (m, 1, 1)) if self.learn_sigma else 1.0
        return _sum_trailing(Normal(loc, scale).log_prob(y[None, :, :]))


def hierarchical_model(variant: int) -> HierarchicalModel:
    """The five hierarchical variants; variant 5 is the main-text model."""
    specs = {
        1: dict(n_groups=2, n_members=5, learn_mu_gamma=False, learn_sigma_gamma=False,
                learn_sigma_beta=False, learn_sigma=True),
        2: dict(n_groups=2, n_members=5, learn_mu_gamma=True, learn_sigma_gamma=False,
                learn_sigma_beta=False, learn_sigma=True),
        3: dict(n_groups=2, n_members=5, learn_mu_gamma=True, learn_sigma_gamma=True,
                learn_sigma_beta=False, learn_sigma=True),
        4: dict(n_groups=2, n_members=5, learn_mu_gamma=True, learn_sigma_gamma=True,
                learn_sigma_beta=True, learn_sigma=False),
        5: dict(n_groups=5, n_members=2, learn_mu_gamma=True, learn_sigma_gamma=True,
                learn_sigma_beta=True, learn_sigma=False),
    }
    if variant not in specs:
        raise ConfigurationError(f"unknown hierarchical variant: {variant}")
    return HierarchicalModel(name=f"hierarchical{variant}", **specs[variant])


# =============================================================================
# REGISTRY
# =============================================================================

MODEL_REGISTRY: dict[str, Callable[[], GenerativeModel]] = {
    "mean": MeanModel,
    "mixture": MixtureModel,
    **{f"hierarchical{v}": functools.partial(hierarchical_model, v) for v in range(1, 6)},
}
MODEL_NAMES = list(MODEL_REGISTRY)
MODEL_ALIASES = {"hierarchical": "hierarchical5"}


def get_model(name: str) -> GenerativeModel:
    key = MODEL_ALIASES.get(name, name)
    if key not in MODEL_REGISTRY:
        raise ConfigurationError(f"unknown model: {name} (choose from {', '.join(MODEL_NAMES)})")
    return MODEL_REGISTRY[key]()


def simulate(model: GenerativeModel, rng: Union[np.random.Generator, int], n: int) -> Dataset:
    return model.simulate(rng, n)


def log_joint_unconstrained(
    model: GenerativeModel,
    xi: Union[Tensor, np.ndarray],
    batch: np.ndarray,
    scale: float = 1.0,
) -> Tensor:
    return model.log_joint_unconstrained(xi, batch, scale)
