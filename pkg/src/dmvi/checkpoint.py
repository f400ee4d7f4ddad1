"""
Guide persistence

A checkpoint is one .npz archive: a JSON header under "__header__" (format
version, guide kind, dimension, construction arguments) plus one array per
ParamStore entry under "param/<name>".
"""

import json
from pathlib import Path
from typing import Any, Union

import numpy as np
import structlog

from dmvi.errors import CheckpointError, ConfigurationError
from dmvi.guides import ADVIGuide, DiffusionGuide, Guide, IAFGuide
from dmvi.nn import MLPConfig
from dmvi.solver import SolverConfig

logger = structlog.get_logger(__name__)

CHECKPOINT_VERSION = "1"
_HEADER_KEY = "__header__"
_PARAM_PREFIX = "param/"


def save_guide(guide: Guide, path: Union[str, Path]) -> Path:
    path = Path(path)
    header = {"version": CHECKPOINT_VERSION, "kind": guide.kind, "dim": guide.dim, **guide.header()}
    arrays = {f"{_PARAM_PREFIX}{name}": value for name, value in guide.params.to_arrays().items()}
    with path.open("wb") as fh:
        np.savez(fh, **{_HEADER_KEY: np.array(json.dumps(header))}, **arrays)
    logger.info("💾 Checkpoint saved", path=str(path), kind=guide.kind, parameters=guide.params.num_parameters())
    return path


def _rebuild(header: dict[str, Any]) -> Guide:
    kind, dim = header["kind"], int(header["dim"])
    if kind == ADVIGuide.kind:
        return ADVIGuide(dim)
    if kind == IAFGuide.kind:
        return IAFGuide(dim, hidden_dim=header["hidden_dim"], log_scale_clamp=header["log_scale_clamp"])
    if kind == DiffusionGuide.kind:
        return DiffusionGuide(
            dim,
            rng=np.random.default_rng(0),
            n_diffusion=header["n_diffusion"],
            solver=SolverConfig(**header["solver"]),
            beta_min=header["beta_min"],
            beta_max=header["beta_max"],
            mlp=MLPConfig(**header["mlp"]),
        )
    raise CheckpointError(f"unknown guide kind in checkpoint: {kind}")


def load_guide(path: Union[str, Path]) -> Guide:
    path = Path(path)
    try:
        with np.load(path, allow_pickle=False) as archive:
            header = json.loads(str(archive[_HEADER_KEY]))
            arrays = {
                key[len(_PARAM_PREFIX):]: archive[key] for key in archive.files if key.startswith(_PARAM_PREFIX)
            }
    except (OSError, KeyError, ValueError) as e:
        raise CheckpointError(f"cannot read checkpoint {path}: {e}") from e

    if header.get("version") != CHECKPOINT_VERSION:
        raise CheckpointError(f"checkpoint version {header.get('version')!r} != {CHECKPOINT_VERSION!r}")

    try:
        guide = _rebuild(header)
        guide.params.load_arrays(arrays)
    except (KeyError, ConfigurationError, ValueError) as e:
        raise CheckpointError(f"checkpoint {path} does not match its header: {e}") from e

    logger.info("📂 Checkpoint loaded", path=str(path), kind=guide.kind, dim=guide.dim)
    return guide
