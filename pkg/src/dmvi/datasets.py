"""
Simulated data sets and their text exchange format

File layout:
    # format_version: 1
    # model: hierarchical5
    # seed: 7
    # n: 100
    # data_dim: 10
    # theta_true: 0.1,0.5,...
    <one comma-separated observation per line>
"""

from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np

from dmvi.errors import ConfigurationError

FORMAT_VERSION = 1


@dataclass(frozen=True, eq=False)
class Dataset:
    """Observations (N rows) plus the constrained parameter draw that generated them."""

    model_name: str
    observations: np.ndarray
    theta_true: np.ndarray
    seed: Optional[int] = None

    @property
    def n(self) -> int:
        return self.observations.shape[0]

    @property
    def data_dim(self) -> int:
        return self.observations.shape[1]

    def minibatch(self, rng: np.random.Generator, batch_size: int) -> tuple[np.ndarray, float]:
        """Rows drawn without replacement and the likelihood scale N / |batch|."""
        size = min(batch_size, self.n)
        idx = rng.choice(self.n, size=size, replace=False)
        return self.observations[idx], self.n / size

    def save(self, path: Path) -> None:
        header = "\n".join(
            [
                f"format_version: {FORMAT_VERSION}",
                f"model: {self.model_name}",
                f"seed: {'' if self.seed is None else self.seed}",
                f"n: {self.n}",
                f"data_dim: {self.data_dim}",
                "theta_true: " + ",".join(repr(float(v)) for v in self.theta_true),
            ]
        )
        np.savetxt(Path(path), self.observations, delimiter=",", header=header, comments="# ", fmt="%.17g")

    @classmethod
    def load(cls, path: Path) -> "Dataset":
        meta: dict[str, str] = {}
        with Path(path).open(encoding="utf-8") as fh:
            for line in fh:
                if not line.startswith("#"):
                    break
                key, _, value = line[1:].strip().partition(":")
                meta[key.strip()] = value.strip()

        try:
            version = int(meta["format_version"])
            n = int(meta["n"])
            data_dim = int(meta["data_dim"])
            theta_true = np.array([float(v) for v in meta["theta_true"].split(",") if v])
            model_name = meta["model"]
        except (KeyError, ValueError) as e:
            raise ConfigurationError(f"malformed dataset header in {path}: {e}")
        if version != FORMAT_VERSION:
            raise ConfigurationError(f"unsupported dataset format version {version}")

        observations = np.loadtxt(Path(path), delimiter=",", comments="#", ndmin=2)
        if observations.shape != (n, data_dim):
            raise ConfigurationError(f"dataset body has shape {observations.shape}, header says ({n}, {data_dim})")

        seed = int(meta["seed"]) if meta.get("seed") else None
        return cls(model_name=model_name, observations=observations, theta_true=theta_true, seed=seed)
