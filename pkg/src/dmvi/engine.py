"""
Variational objective and the training loop shared by every guide

objective(phi) = (1/M) sum_m [ log p(y, f^-1(xi_m)) + log|det J_{f^-1}(xi_m)| + term(xi_m) ]

with xi_m drawn pathwise from the guide and term = -log q(xi_m) for exact-density
guides, the negative denoising loss for the diffusion guide. The likelihood of a
mini-batch is scaled by N / |batch|.
"""

import json
import math
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Union

import numpy as np
import structlog
from pydantic import BaseModel, Field

from dmvi import autodiff as ad
from dmvi.autodiff import Tensor
from dmvi.config import settings
from dmvi.datasets import Dataset
from dmvi.errors import ConfigurationError, NumericFailureError, TrainingError
from dmvi.guides.base import Guide
from dmvi.models import GenerativeModel
from dmvi.optim import adamw_step

logger = structlog.get_logger(__name__)


class TrainConfig(BaseModel):
    batch_size: int = Field(default_factory=lambda: settings.BATCH_SIZE, ge=1)
    learning_rate: float = Field(default_factory=lambda: settings.LEARNING_RATE, gt=0.0)
    mc_samples: int = Field(default_factory=lambda: settings.MC_SAMPLES, ge=1)
    max_steps: Optional[int] = Field(default=None, ge=1, description="None: cap chosen from the data set size")
    convergence_window: int = Field(default_factory=lambda: settings.CONVERGENCE_WINDOW, ge=1)
    convergence_tolerance: float = Field(default_factory=lambda: settings.CONVERGENCE_TOLERANCE, gt=0.0)
    convergence_patience: int = Field(default_factory=lambda: settings.CONVERGENCE_PATIENCE, ge=1)
    log_every: int = Field(default_factory=lambda: settings.LOG_EVERY, ge=1)
    seed: int = 0


@dataclass
class TrainTrace:
    objectives: list[float] = field(default_factory=list)
    duration_s: float = 0.0
    converged: bool = False

    @property
    def steps(self) -> int:
        return len(self.objectives)

    def to_jsonl(self, path: Union[str, Path]) -> Path:
        path = Path(path)
        with path.open("w", encoding="utf-8") as fh:
            for step, value in enumerate(self.objectives, start=1):
                fh.write(json.dumps({"step": step, "objective": value}) + "\n")
        return path

    @classmethod
    def from_jsonl(cls, path: Union[str, Path]) -> "TrainTrace":
        records = [json.loads(line) for line in Path(path).read_text(encoding="utf-8").splitlines() if line.strip()]
        records.sort(key=lambda r: r["step"])
        return cls(objectives=[float(r["objective"]) for r in records])


# =============================================================================
# OBJECTIVE
# =============================================================================

def _per_sample_objective(
    model: GenerativeModel,
    guide: Guide,
    xi: Tensor,
    batch: np.ndarray,
    scale: float,
    rng: np.random.Generator,
) -> Tensor:
    values = model.log_joint_unconstrained(xi, batch, scale) + guide.variational_term(xi, rng)
    bad = np.flatnonzero(~np.isfinite(values.data))
    if bad.size:
        raise NumericFailureError("non-finite objective estimate", where=f"sample {int(bad[0])}")
    return values


def estimate_objective(
    model: GenerativeModel,
    guide: Guide,
    batch: np.ndarray,
    scale: float,
    rng: np.random.Generator,
    mc_samples: int,
) -> Tensor:
    """Monte Carlo objective over mc_samples pathwise guide draws; differentiable in the guide."""
    if mc_samples < 1:
        raise ConfigurationError("need at least one Monte Carlo sample")
    xi = guide.sample(rng, mc_samples, train_mode=True)
    return ad.tmean(_per_sample_objective(model, guide, xi, batch, scale, rng))


def evaluate_objective(
    model: GenerativeModel,
    guide: Guide,
    dataset: Dataset,
    rng: np.random.Generator,
    mc_samples: Optional[int] = None,
    chunk: Optional[int] = None,
) -> tuple[float, float]:
    """Full-data objective without a graph: (mean, standard error) over mc_samples draws."""
    mc_samples = settings.EVAL_MC_SAMPLES if mc_samples is None else mc_samples
    chunk = settings.SAMPLE_CHUNK if chunk is None else chunk
    pieces = []
    with ad.no_grad():
        for start in range(0, mc_samples, chunk):
            xi = guide.sample(rng, min(chunk, mc_samples - start))
            pieces.append(_per_sample_objective(model, guide, xi, dataset.observations, 1.0, rng).data)
    values = np.concatenate(pieces)
    stderr = float(values.std(ddof=1) / math.sqrt(values.size)) if values.size > 1 else float("nan")
    return float(values.mean()), stderr


# =============================================================================
# TRAINING
# =============================================================================

class _ConvergenceMonitor:
    """Moving average over fixed windows; stops after `patience` windows of small relative gain."""

    def __init__(self, window: int, tolerance: float, patience: int):
        self.window = window
        self.tolerance = tolerance
        self.patience = patience
        self._previous: Optional[float] = None
        self._stalled = 0

    def update(self, objectives: list[float]) -> bool:
        if len(objectives) % self.window:
            return False
        current = float(np.mean(objectives[-self.window:]))
        if self._previous is not None:
            gain = (current - self._previous) / max(abs(self._previous), 1e-12)
            self._stalled = self._stalled + 1 if gain < self.tolerance else 0
        self._previous = current
        return self._stalled >= self.patience


def train(
    model: GenerativeModel,
    dataset: Dataset,
    guide: Guide,
    config: Optional[TrainConfig] = None,
) -> tuple[Guide, TrainTrace]:
    """
    Stochastic optimization of the guide parameters with AdamW on the negative objective.

    Stops when the convergence monitor fires or at max_steps. A numeric failure is
    raised as TrainingError with the step index and the last finite objective.
    """
    config = config if config is not None else TrainConfig()
    if guide.dim != model.dim:
        raise ConfigurationError(f"guide dim {guide.dim} != model dim {model.dim}")
    if config.batch_size > dataset.n:
        raise ConfigurationError(f"batch size {config.batch_size} exceeds data set size {dataset.n}")

    max_steps = config.max_steps if config.max_steps is not None else settings.max_steps_for(dataset.n)
    rng = np.random.default_rng(config.seed)
    monitor = _ConvergenceMonitor(config.convergence_window, config.convergence_tolerance, config.convergence_patience)
    trace = TrainTrace()
    log = logger.bind(model=model.name, guide=guide.kind, n_data=dataset.n, seed=config.seed)
    log.info("🧠 Training started", max_steps=max_steps, parameters=guide.params.num_parameters())

    def negative_objective(params, batch: np.ndarray, scale: float) -> Tensor:
        return -estimate_objective(model, guide, batch, scale, rng, config.mc_samples)

    start = time.perf_counter()
    for step in range(1, max_steps + 1):
        batch, scale = dataset.minibatch(rng, config.batch_size)
        try:
            value, grads = ad.evaluate_with_gradient(negative_objective, guide.params, batch, scale)
            adamw_step(guide.params, grads, config.learning_rate)
        except NumericFailureError as e:
            last = trace.objectives[-1] if trace.objectives else None
            log.error("❌ Numeric failure", step=step, where=e.where, last_objective=last)
            raise TrainingError(str(e), step=step, last_objective=last) from e

        trace.objectives.append(-value)
        log.debug("step", step=step, objective=-value)
        if step % config.log_every == 0:
            window = trace.objectives[-config.log_every:]
            log.info("📈 Training progress", step=step, objective=round(float(np.mean(window)), 4))
        if monitor.update(trace.objectives):
            trace.converged = True
            break
    trace.duration_s = time.perf_counter() - start

    if trace.converged:
        log.info("✅ Converged", steps=trace.steps, duration_s=round(trace.duration_s, 3))
    else:
        log.info("⏹️ Step cap reached", steps=trace.steps, duration_s=round(trace.duration_s, 3))
    report = getattr(guide, "report", None)
    if callable(report):
        report()
    return guide, trace
