#!/usr/bin/env python3
"""
dmvi-bench command-line interface

    dmvi-bench sweep --model mean --method ADVI --n-data 100 --out results.csv
    dmvi-bench summarize results.csv
    dmvi-bench models
    dmvi-bench simulate --model mixture --n-data 100 --seed 3 --out data.csv
"""

import sys
from pathlib import Path
from typing import Any, Optional

import click
import pandas as pd
import structlog
import yaml
from pydantic import ValidationError

from dmvi.bench import SweepConfig, aggregate_and_emit, parse_csv, run_sweep, summarize
from dmvi.config import settings
from dmvi.errors import ConfigurationError, DMVIError
from dmvi.logging_config import configure_logging
from dmvi.models import MODEL_NAMES, get_model

logger = structlog.get_logger(__name__)

# config-file key -> SweepConfig field
_FILE_KEYS = {
    "model": "models",
    "method": "methods",
    "n-data": "n_data",
    "n-diff": "n_diff",
    "solver-steps": "solver_steps",
    "solver-order": "solver_order",
    "replicates": "replicates",
    "seed": "seed",
    "out": "out",
    "jobs": "jobs",
    "max-steps": "max_steps",
}
_LIST_FIELDS = {"models", "methods", "n_data", "n_diff", "solver_steps", "solver_order"}


def _split(values: tuple[str, ...]) -> list[str]:
    """Repeated flags and comma-separated values both work: --model mean,mixture --model hierarchical5."""
    return [part.strip() for value in values for part in str(value).split(",") if part.strip()]


def load_config_file(path: Path) -> dict[str, Any]:
    """YAML mapping keyed by long flag names; lists may be YAML lists or comma-separated strings."""
    try:
        raw = yaml.safe_load(Path(path).read_text(encoding="utf-8")) or {}
    except (OSError, yaml.YAMLError) as e:
        raise ConfigurationError(f"cannot read config file {path}: {e}") from e
    if not isinstance(raw, dict):
        raise ConfigurationError(f"config file {path} must hold a key: value mapping")

    overrides: dict[str, Any] = {}
    for key, value in raw.items():
        field = _FILE_KEYS.get(str(key))
        if field is None:
            raise ConfigurationError(f"unknown config key: {key}")
        if field in _LIST_FIELDS:
            items = value if isinstance(value, list) else [value]
            overrides[field] = _split(tuple(str(v) for v in items))
        else:
            overrides[field] = value
    return overrides


def build_sweep_config(options: dict[str, Any], config_file: Optional[Path]) -> SweepConfig:
    """Flags first, then the config file on top."""
    values = {k: v for k, v in options.items() if v is not None}
    for field in _LIST_FIELDS:
        if field in values:
            values[field] = _split(values[field])
            if not values[field]:
                del values[field]
    if config_file is not None:
        values.update(load_config_file(config_file))
    try:
        return SweepConfig(**values)
    except ValidationError as e:
        raise ConfigurationError(f"invalid sweep configuration: {e}") from e


@click.group()
def main() -> None:
    """Diffusion-model variational inference benchmark."""


@main.command()
@click.option("--model", "models", multiple=True, help="Model name(s); default: all seven")
@click.option("--method", "methods", multiple=True, help="ADVI, DMVI, NFVI; default: all three")
@click.option("--n-data", "n_data", multiple=True, help="Data set sizes; default: 100,1000")
@click.option("--n-diff", "n_diff", multiple=True, help="Diffusion steps T; default: 50,100")
@click.option("--solver-steps", "solver_steps", multiple=True, help="Solver steps; default: 10,20")
@click.option("--solver-order", "solver_order", multiple=True, help="Solver order 1 or 3; default: 1,3")
@click.option("--replicates", type=int, default=None, help="Seeds per cell (default 5)")
@click.option("--seed", type=int, default=None, help="Base seed (default 0)")
@click.option("--out", type=click.Path(path_type=Path), default=None, help="Row CSV path")
@click.option("--jobs", type=int, default=None, help="Concurrent runs")
@click.option("--max-steps", "max_steps", type=int, default=None, help="Training step cap override")
@click.option("--config", "config_file", type=click.Path(exists=True, path_type=Path), default=None,
              help="YAML file; its values override flags")
@click.option("--log-level", default=None, help="DEBUG | INFO | WARNING | ERROR")
@click.option("--log-format", type=click.Choice(["console", "json"]), default=None)
def sweep(config_file: Optional[Path], log_level: Optional[str], log_format: Optional[str], **options: Any) -> None:
    """Run the benchmark grid and write the row CSV plus its summary."""
    configure_logging(log_level, log_format)
    if log_level:
        settings.LOG_LEVEL = log_level.upper()
    if log_format:
        settings.LOG_FORMAT = log_format
    try:
        config = build_sweep_config(options, config_file)
    except ConfigurationError as e:
        raise click.UsageError(str(e)) from e

    rows = run_sweep(config)
    failed = [r for r in rows if r.failed]
    try:
        table = aggregate_and_emit(rows, config.out)
    except ConfigurationError as e:
        table = None
        click.echo(f"❌ {e}", err=True)

    if table is not None:
        with pd.option_context("display.width", 200, "display.max_columns", None):
            click.echo(table.to_string())
    for row in failed:
        solver = "" if row.n_diff is None else f" n_diff={row.n_diff} n_steps={row.n_steps} n_order={row.n_order}"
        click.echo(f"❌ {row.model} {row.method} n_data={row.n_data} seed={row.seed}{solver}: {row.error}", err=True)
    sys.exit(0 if not failed and table is not None else 1)


@main.command("summarize")
@click.argument("csv_path", type=click.Path(exists=True, path_type=Path))
def summarize_command(csv_path: Path) -> None:
    """Re-aggregate an existing row CSV."""
    try:
        rows = parse_csv(csv_path)
    except (DMVIError, ValueError) as e:
        raise click.ClickException(str(e)) from e
    with pd.option_context("display.width", 200, "display.max_columns", None):
        click.echo(summarize(rows).to_string())


@main.command()
def models() -> None:
    """List the benchmark models and their parameter layouts."""
    for name in MODEL_NAMES:
        click.echo(get_model(name).describe())


@main.command()
@click.option("--model", "model_name", required=True, type=click.Choice(MODEL_NAMES + ["hierarchical"]))
@click.option("--n-data", "n_data", required=True, type=int)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--out", type=click.Path(path_type=Path), required=True)
def simulate(model_name: str, n_data: int, seed: int, out: Path) -> None:
    """Simulate one data set and write it in the text exchange format."""
    configure_logging()
    try:
        dataset = get_model(model_name).simulate(seed, n_data)
    except DMVIError as e:
        raise click.ClickException(str(e)) from e
    dataset.save(out)
    logger.info("💾 Dataset written", path=str(out), model=dataset.model_name, n=dataset.n)


if __name__ == "__main__":
    main()
