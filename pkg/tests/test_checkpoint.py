"""
Guide checkpoint tests
"""

import json

import numpy as np
import pytest

from dmvi.checkpoint import load_guide, save_guide
from dmvi.errors import CheckpointError
from dmvi.guides import ADVIGuide, DiffusionGuide, IAFGuide
from dmvi.nn import MLPConfig
from dmvi.solver import SolverConfig


def _perturb_params(guide, rng):
    for name in guide.params:
        tensor = guide.params[name]
        tensor.data = tensor.data + 0.1 * rng.standard_normal(tensor.shape)
    return guide


class TestCheckpoint:
    """Tests for saving and restoring guides"""

    @pytest.mark.parametrize(
        "factory",
        [
            lambda: ADVIGuide(4),
            lambda: IAFGuide(4, hidden_dim=8, log_scale_clamp=5.0),
            lambda: DiffusionGuide(
                4,
                rng=np.random.default_rng(1),
                n_diffusion=100,
                solver=SolverConfig(steps=20, order=3),
                mlp=MLPConfig(input_dim=4, output_dim=4, hidden_dim=16),
            ),
        ],
    )
    def test_round_trip(self, tmp_path, rng, factory):
        """Test that a reloaded guide has the same parameters and draws"""
        guide = _perturb_params(factory(), rng)
        path = save_guide(guide, tmp_path / "guide.npz")
        loaded = load_guide(path)

        assert type(loaded) is type(guide)
        assert loaded.header() == guide.header()
        for name in guide.params:
            np.testing.assert_array_equal(loaded.params[name].data, guide.params[name].data)
        np.testing.assert_array_equal(
            loaded.sample(np.random.default_rng(2), 3).data, guide.sample(np.random.default_rng(2), 3).data
        )

    def test_missing_file(self, tmp_path):
        """Test that an absent file is reported"""
        with pytest.raises(CheckpointError):
            load_guide(tmp_path / "nothing.npz")

    def _rewrite_header(self, path, **changes):
        with np.load(path) as archive:
            contents = {key: archive[key] for key in archive.files}
        header = json.loads(str(contents["__header__"]))
        header.update(changes)
        contents["__header__"] = np.array(json.dumps(header))
        with path.open("wb") as fh:
            np.savez(fh, **contents)

    def test_version_mismatch(self, tmp_path):
        """Test that other checkpoint versions are refused"""
        path = save_guide(ADVIGuide(2), tmp_path / "guide.npz")
        self._rewrite_header(path, version="0")
        with pytest.raises(CheckpointError):
            load_guide(path)

    def test_unknown_kind(self, tmp_path):
        """Test that unknown guide kinds are refused"""
        path = save_guide(ADVIGuide(2), tmp_path / "guide.npz")
        self._rewrite_header(path, kind="svgd")
        with pytest.raises(CheckpointError):
            load_guide(path)

    def test_shape_mismatch(self, tmp_path):
        """Test that parameters must fit the header dimension"""
        path = save_guide(ADVIGuide(2), tmp_path / "guide.npz")
        self._rewrite_header(path, dim=3)
        with pytest.raises(CheckpointError):
            load_guide(path)
