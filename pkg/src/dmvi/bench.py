"""
Benchmark harness: models x methods x data sizes x solver settings x replicates

Each cell simulates its data set from the cell seed, trains a fresh guide, times
training and the drawing of the posterior sample, and scores the draws by MSE
against the parameter draw that generated the data.
"""

import itertools
import time
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path
from typing import Optional, Union

import numpy as np
import pandas as pd
import structlog
from pydantic import BaseModel, Field, field_validator, model_validator

from dmvi.config import settings
from dmvi.engine import TrainConfig, train
from dmvi.errors import ConfigurationError, DMVIError
from dmvi.guides import METHODS, build_guide
from dmvi.logging_config import configure_logging
from dmvi.models import MODEL_ALIASES, MODEL_NAMES, GenerativeModel, MixtureModel, get_model

logger = structlog.get_logger(__name__)

CSV_COLUMNS = ["model", "method", "n_data", "n_diff", "n_steps", "n_order", "seed", "t_train_s", "t_sample_s", "mse"]
SOLVER_COLUMNS = ["n_diff", "n_steps", "n_order"]
SUMMARY_METRICS = ["t_train_s", "t_sample_s", "mse"]


class BenchmarkRow(BaseModel):
    model: str
    method: str
    n_data: int
    n_diff: Optional[int] = None
    n_steps: Optional[int] = None
    n_order: Optional[int] = None
    seed: int
    t_train_s: Optional[float] = None
    t_sample_s: Optional[float] = None
    mse: Optional[float] = None
    failed: bool = False
    error: Optional[str] = None

    @model_validator(mode="after")
    def check_solver_fields(self) -> "BenchmarkRow":
        solver = (self.n_diff, self.n_steps, self.n_order)
        if self.method == "DMVI" and None in solver:
            raise ValueError("DMVI rows carry n_diff, n_steps and n_order")
        if self.method != "DMVI" and any(v is not None for v in solver):
            raise ValueError(f"{self.method} rows carry no solver fields")
        return self


class Cell(BaseModel):
    """One run of the sweep grid."""

    model: str
    method: str
    n_data: int
    seed: int
    n_diff: Optional[int] = None
    n_steps: Optional[int] = None
    n_order: Optional[int] = None


class SweepConfig(BaseModel):
    models: list[str] = Field(default_factory=lambda: list(MODEL_NAMES))
    methods: list[str] = Field(default_factory=lambda: list(METHODS))
    n_data: list[int] = Field(default_factory=lambda: [100, 1000])
    n_diff: list[int] = Field(default_factory=lambda: [50, 100])
    solver_steps: list[int] = Field(default_factory=lambda: [10, 20])
    solver_order: list[int] = Field(default_factory=lambda: [1, 3])
    replicates: int = Field(default=5, ge=1)
    seed: int = 0
    out: Path = Path("results.csv")
    jobs: int = Field(default=1, ge=1)
    max_steps: Optional[int] = Field(default=None, ge=1)
    posterior_draws: int = Field(default_factory=lambda: settings.POSTERIOR_DRAWS, ge=1)

    @field_validator("models")
    @classmethod
    def validate_models(cls, v: list[str]) -> list[str]:
        resolved = [MODEL_ALIASES.get(m, m) for m in v]
        unknown = [m for m in resolved if m not in MODEL_NAMES]
        if unknown:
            raise ValueError(f"unknown models: {unknown}")
        return resolved

    @field_validator("methods")
    @classmethod
    def validate_methods(cls, v: list[str]) -> list[str]:
        upper = [m.upper() for m in v]
        unknown = [m for m in upper if m not in METHODS]
        if unknown:
            raise ValueError(f"unknown methods: {unknown}")
        return upper

    @field_validator("n_data", "n_diff", "solver_steps")
    @classmethod
    def validate_positive(cls, v: list[int]) -> list[int]:
        if not v or min(v) < 1:
            raise ValueError("sizes must be non-empty and >= 1")
        return v

    @field_validator("solver_order")
    @classmethod
    def validate_orders(cls, v: list[int]) -> list[int]:
        if not v or any(o not in (1, 3) for o in v):
            raise ValueError("solver orders must be 1 or 3")
        return v


def expand_sweep(config: SweepConfig) -> list[Cell]:
    """One cell per (model, N, replicate, method[, n_diff, steps, order])."""
    cells: list[Cell] = []
    for model, n_data, replicate in itertools.product(config.models, config.n_data, range(config.replicates)):
        seed = config.seed + replicate
        for method in config.methods:
            if method != "DMVI":
                cells.append(Cell(model=model, method=method, n_data=n_data, seed=seed))
                continue
            for n_diff, n_steps, n_order in itertools.product(config.n_diff, config.solver_steps, config.solver_order):
                cells.append(
                    Cell(model=model, method=method, n_data=n_data, seed=seed,
                         n_diff=n_diff, n_steps=n_steps, n_order=n_order)
                )
    return cells


# =============================================================================
# SCORING
# =============================================================================

def match_components(model: MixtureModel, draws: np.ndarray, theta_true: np.ndarray) -> np.ndarray:
    """Per draw, relabel components by the permutation whose means sit closest to theta_true."""
    n = draws.shape[0]
    blocks = model.unflatten(draws)
    mu, sigma = blocks["mu"], blocks["sigma"]
    mu_true = model.unflatten(theta_true)["mu"]

    perms = np.array(model.component_permutations())
    errors = np.stack([((mu[:, p, :] - mu_true) ** 2).sum(axis=(1, 2)) for p in perms], axis=1)
    best = perms[np.argmin(errors, axis=1)]
    rows = np.arange(n)[:, None]
    matched = {"mu": mu[rows, best], "sigma": sigma[rows, best]}
    return np.concatenate([matched[b.name].reshape(n, -1) for b in model.blocks], axis=1)


def compute_mse(
    posterior_draws: np.ndarray,
    theta_true: np.ndarray,
    model: Optional[GenerativeModel] = None,
) -> float:
    """Mean over draws and coordinates of (draw - theta_true)^2; mixtures are component-matched first."""
    draws = np.atleast_2d(np.asarray(posterior_draws, dtype=np.float64))
    theta_true = np.asarray(theta_true, dtype=np.float64)
    if draws.shape[1] != theta_true.shape[0]:
        raise ConfigurationError(f"draws have width {draws.shape[1]}, theta_true has {theta_true.shape[0]}")
    if isinstance(model, MixtureModel):
        draws = match_components(model, draws, theta_true)
    return float(np.mean((draws - theta_true) ** 2))


# =============================================================================
# RUNS
# =============================================================================

def run_experiment(cell: Cell, max_steps: Optional[int] = None, posterior_draws: Optional[int] = None) -> BenchmarkRow:
    """Simulate, train, time and score one cell. Failures come back as flagged rows."""
    solver_fields = {"n_diff": cell.n_diff, "n_steps": cell.n_steps, "n_order": cell.n_order}
    log = logger.bind(model=cell.model, method=cell.method, n_data=cell.n_data, seed=cell.seed, **{
        k: v for k, v in solver_fields.items() if v is not None
    })
    try:
        model = get_model(cell.model)
        dataset = model.simulate(cell.seed, cell.n_data)
        init_seq, train_seq, sample_seq = np.random.SeedSequence(cell.seed).spawn(3)

        guide = build_guide(
            cell.method,
            model.dim,
            rng=np.random.default_rng(init_seq),
            n_diffusion=cell.n_diff,
            solver_steps=cell.n_steps,
            solver_order=cell.n_order,
        )
        train_seed = int(train_seq.generate_state(1)[0])
        config = TrainConfig(seed=train_seed, max_steps=max_steps, batch_size=min(settings.BATCH_SIZE, dataset.n))
        guide, trace = train(model, dataset, guide, config)

        sample_rng = np.random.default_rng(sample_seq)
        start = time.perf_counter()
        draws = guide.posterior_draws(model, sample_rng, posterior_draws)
        t_sample = time.perf_counter() - start

        mse = compute_mse(draws, dataset.theta_true, model)
        log.info("📊 Cell finished", steps=trace.steps, t_train_s=round(trace.duration_s, 3), mse=round(mse, 5))
        return BenchmarkRow(
            model=cell.model, method=cell.method, n_data=cell.n_data, seed=cell.seed, **solver_fields,
            t_train_s=trace.duration_s, t_sample_s=t_sample, mse=mse,
        )
    except DMVIError as e:
        log.error("❌ Cell failed", error=str(e))
        error = str(e)
    except Exception as e:
        log.exception("❌ Cell crashed")
        error = f"{type(e).__name__}: {e}"
    return BenchmarkRow(
        model=cell.model, method=cell.method, n_data=cell.n_data, seed=cell.seed, **solver_fields,
        failed=True, error=error,
    )


def _init_worker(level: str, fmt: str) -> None:
    configure_logging(level, fmt)


def run_sweep(config: SweepConfig) -> list[BenchmarkRow]:
    """Run every cell, at most config.jobs at a time; rows come back in grid order."""
    cells = expand_sweep(config)
    logger.info("🚀 Sweep started", cells=len(cells), jobs=config.jobs)
    if config.jobs == 1:
        return [run_experiment(c, config.max_steps, config.posterior_draws) for c in cells]

    with ProcessPoolExecutor(
        max_workers=config.jobs,
        initializer=_init_worker,
        initargs=(settings.LOG_LEVEL, settings.LOG_FORMAT),
    ) as pool:
        futures = [pool.submit(run_experiment, c, config.max_steps, config.posterior_draws) for c in cells]
        return [f.result() for f in futures]


# =============================================================================
# TABLES
# =============================================================================

def rows_to_frame(rows: list[BenchmarkRow]) -> pd.DataFrame:
    frame = pd.DataFrame([r.model_dump(include=set(CSV_COLUMNS)) for r in rows], columns=CSV_COLUMNS)
    for column in SOLVER_COLUMNS:
        frame[column] = frame[column].astype("Int64")
    frame["n_data"] = frame["n_data"].astype("int64")
    frame["seed"] = frame["seed"].astype("int64")
    for column in SUMMARY_METRICS:
        frame[column] = frame[column].astype("float64")
    return frame


def summarize(rows: Union[list[BenchmarkRow], pd.DataFrame]) -> pd.DataFrame:
    """
    Mean metrics per (model, method, n_diff, n_steps, n_order), one column group per N.
    Failed rows are left out.
    """
    if isinstance(rows, pd.DataFrame):
        frame = rows
    else:
        frame = rows_to_frame([r for r in rows if not r.failed])
    keys = ["model", "method", "n_diff", "n_steps", "n_order", "n_data"]
    means = frame.groupby(keys, dropna=False)[SUMMARY_METRICS].mean()
    table = means.unstack("n_data")
    table.columns = table.columns.set_names(["metric", "n_data"])
    return table.swaplevel("metric", "n_data", axis=1).sort_index(axis=1)


def summary_path(out: Union[str, Path]) -> Path:
    out = Path(out)
    return out.with_name(f"{out.stem}_summary.csv")


def aggregate_and_emit(rows: list[BenchmarkRow], out: Union[str, Path]) -> pd.DataFrame:
    """Write the per-run CSV (successful rows) and the summary table next to it."""
    ok = [r for r in rows if not r.failed]
    if not ok:
        raise ConfigurationError("no successful rows to emit")
    out = Path(out)
    frame = rows_to_frame(ok)
    frame.to_csv(out, index=False, na_rep="")
    table = summarize(frame)
    table.to_csv(summary_path(out))
    logger.info("💾 Results written", path=str(out), rows=len(ok), summary=str(summary_path(out)))
    return table


def parse_csv(path: Union[str, Path]) -> list[BenchmarkRow]:
    header = list(pd.read_csv(path, nrows=0).columns)
    if header != CSV_COLUMNS:
        raise ConfigurationError(f"unexpected CSV columns: {header}")
    frame = pd.read_csv(
        path,
        float_precision="round_trip",
        dtype={"model": str, "method": str, "n_data": "int64", "seed": "int64",
               **{c: "Int64" for c in SOLVER_COLUMNS}, **{c: "float64" for c in SUMMARY_METRICS}},
    )
    rows = []
    for record in frame.to_dict(orient="records"):
        rows.append(BenchmarkRow(**{k: _plain(v) for k, v in record.items()}))
    return rows


def _plain(value):
    """pandas cell -> builtin Python value (missing -> None)."""
    if pd.isna(value):
        return None
    return value.item() if isinstance(value, np.generic) else value
