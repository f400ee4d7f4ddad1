"""
Benchmark harness tests
"""

import math

import numpy as np
import pandas as pd
import pytest
from pydantic import ValidationError

from dmvi import bench
from dmvi.bench import (
    CSV_COLUMNS,
    BenchmarkRow,
    Cell,
    SweepConfig,
    aggregate_and_emit,
    compute_mse,
    expand_sweep,
    parse_csv,
    rows_to_frame,
    run_experiment,
    run_sweep,
    summarize,
    summary_path,
)
from dmvi.errors import ConfigurationError
from dmvi.models import MixtureModel


def _row(method="ADVI", n_data=100, seed=0, mse=1.0, **solver):
    return BenchmarkRow(
        model="mean", method=method, n_data=n_data, seed=seed,
        t_train_s=0.5, t_sample_s=0.01, mse=mse, **solver,
    )


def _dmvi_row(**kwargs):
    return _row(method="DMVI", n_diff=50, n_steps=10, n_order=1, **kwargs)


class TestComputeMSE:
    """Tests for posterior scoring"""

    def test_exact_draws(self):
        """Test that draws at theta_true score zero"""
        theta = np.array([1.0, -2.0, 0.5])
        assert compute_mse(np.tile(theta, (4, 1)), theta) == 0.0

    def test_constant_offset(self):
        """Test the mean over draws and coordinates"""
        theta = np.zeros(3)
        draws = np.array([[1.0, 1.0, 1.0], [3.0, 3.0, 3.0]])
        assert compute_mse(draws, theta) == pytest.approx(5.0)

    def test_gaussian_draws_recover_variance(self, rng):
        """Test that draws around theta_true with variance v score within 3% of v"""
        theta = rng.normal(size=10)
        v = 0.7
        draws = theta + math.sqrt(v) * rng.standard_normal((20_000, 10))
        assert compute_mse(draws, theta) == pytest.approx(v, rel=0.03)

    def test_unit_offset(self):
        """Test that a unit shift in every coordinate scores one"""
        theta = np.array([0.5, -1.0, 2.0, 0.0])
        assert compute_mse(np.tile(theta + 1.0, (20, 1)), theta) == pytest.approx(1.0)

    def test_single_draw(self):
        """Test that a single draw vector is accepted"""
        assert compute_mse(np.array([1.0, 2.0]), np.zeros(2)) == pytest.approx(2.5)

    def test_width_mismatch(self):
        """Test that draws and theta_true must have the same width"""
        with pytest.raises(ConfigurationError):
            compute_mse(np.zeros((2, 3)), np.zeros(4))

    def test_mixture_label_switching(self):
        """Test that permuted mixture components are matched before scoring"""
        model = MixtureModel()
        theta = model.simulate(2, 10).theta_true
        blocks = model.unflatten(theta)
        order = [2, 0, 1]
        swapped = model.flatten({"mu": blocks["mu"][order], "sigma": blocks["sigma"][order]})
        draws = np.stack([theta, swapped])
        assert compute_mse(draws, theta, model) == pytest.approx(0.0, abs=1e-24)
        assert compute_mse(draws, theta) > 0.0

    def test_matching_is_per_draw(self):
        """Test that each draw gets its own permutation"""
        model = MixtureModel()
        theta = model.simulate(3, 10).theta_true
        blocks = model.unflatten(theta)
        draws = np.stack(
            [model.flatten({"mu": blocks["mu"][list(p)], "sigma": blocks["sigma"][list(p)]})
             for p in model.component_permutations()]
        )
        assert compute_mse(draws, theta, model) == pytest.approx(0.0, abs=1e-24)


class TestSweepConfig:
    """Tests for sweep grid configuration"""

    def test_defaults(self):
        """Test the full default grid"""
        config = SweepConfig()
        assert len(config.models) == 7
        assert config.methods == ["ADVI", "DMVI", "NFVI"]
        assert config.n_data == [100, 1000]
        assert config.replicates == 5

    def test_aliases(self):
        """Test model aliases and method case"""
        config = SweepConfig(models=["hierarchical"], methods=["advi", "Nfvi"])
        assert config.models == ["hierarchical5"]
        assert config.methods == ["ADVI", "NFVI"]

    @pytest.mark.parametrize(
        "kwargs",
        [{"models": ["poisson"]}, {"methods": ["HMC"]}, {"solver_order": [2]}, {"n_data": []}, {"replicates": 0}],
    )
    def test_invalid(self, kwargs):
        """Test rejection of unknown names and empty or bad sizes"""
        with pytest.raises(ValidationError):
            SweepConfig(**kwargs)


class TestExpandSweep:
    """Tests for the cell grid"""

    def test_runs_per_replicate(self):
        """Test twenty runs per model and seed over both data sizes"""
        cells = expand_sweep(SweepConfig(models=["mean"], replicates=1))
        assert len(cells) == 20
        assert sum(c.method == "DMVI" for c in cells) == 16
        assert {c.seed for c in cells} == {0}

    def test_seeds_follow_replicates(self):
        """Test seed = base seed + replicate index"""
        cells = expand_sweep(SweepConfig(models=["mean"], methods=["ADVI"], n_data=[100], replicates=3, seed=10))
        assert [c.seed for c in cells] == [10, 11, 12]

    def test_baselines_have_no_solver_fields(self):
        """Test that only DMVI cells carry solver settings"""
        for cell in expand_sweep(SweepConfig(models=["mean"], replicates=1)):
            solver = (cell.n_diff, cell.n_steps, cell.n_order)
            if cell.method == "DMVI":
                assert None not in solver
            else:
                assert solver == (None, None, None)


class TestBenchmarkRow:
    """Tests for row validation"""

    def test_dmvi_needs_solver_fields(self):
        """Test that DMVI rows must carry all solver fields"""
        with pytest.raises(ValidationError):
            _row(method="DMVI", n_diff=50)

    def test_baseline_rejects_solver_fields(self):
        """Test that baseline rows carry no solver fields"""
        with pytest.raises(ValidationError):
            _row(method="NFVI", n_steps=10)


class TestTables:
    """Tests for aggregation and the CSV format"""

    def test_summary_means(self):
        """Test per-group means with one column group per N"""
        rows = [_row(seed=s, mse=m) for s, m in enumerate([1.0, 2.0, 3.0, 4.0, 5.0])]
        rows += [_row(n_data=1000, mse=0.5), _dmvi_row(mse=4.0)]
        table = summarize(rows)
        advi = table[table.index.get_level_values("method") == "ADVI"]
        assert advi[(100, "mse")].item() == pytest.approx(3.0)
        assert advi[(1000, "mse")].item() == pytest.approx(0.5)
        dmvi = table[table.index.get_level_values("method") == "DMVI"]
        assert dmvi[(100, "mse")].item() == pytest.approx(4.0)
        assert len(table) == 2

    def test_failed_rows_left_out(self):
        """Test that failed rows do not enter the summary"""
        failed = BenchmarkRow(model="mean", method="ADVI", n_data=100, seed=9, failed=True, error="boom")
        table = summarize([_row(mse=2.0), failed])
        assert table[(100, "mse")].item() == pytest.approx(2.0)

    def test_frame_schema(self):
        """Test column order and nullable solver columns"""
        frame = rows_to_frame([_row(), _dmvi_row()])
        assert list(frame.columns) == CSV_COLUMNS
        assert str(frame["n_diff"].dtype) == "Int64"
        assert frame["n_diff"].isna().tolist() == [True, False]

    def test_csv_round_trip(self, tmp_path):
        """Test that written rows parse back identically"""
        rows = [_row(mse=0.1234567890123), _dmvi_row(seed=3, mse=1e-7)]
        out = tmp_path / "results.csv"
        aggregate_and_emit(rows, out)
        lines = out.read_text().splitlines()
        assert lines[0] == ",".join(CSV_COLUMNS)
        assert lines[1].startswith("mean,ADVI,100,,,,0,")
        assert parse_csv(out) == rows
        assert summary_path(out).exists()

    def test_emit_skips_failures(self, tmp_path):
        """Test that failed rows are not written"""
        failed = BenchmarkRow(model="mean", method="ADVI", n_data=100, seed=1, failed=True, error="x")
        out = tmp_path / "results.csv"
        aggregate_and_emit([_row(), failed], out)
        assert len(pd.read_csv(out)) == 1
        with pytest.raises(ConfigurationError):
            aggregate_and_emit([failed], tmp_path / "empty.csv")

    def test_unexpected_columns(self, tmp_path):
        """Test that foreign CSV files are rejected"""
        path = tmp_path / "other.csv"
        path.write_text("a,b\n1,2\n")
        with pytest.raises(ConfigurationError):
            parse_csv(path)

    def test_summary_path(self, tmp_path):
        """Test the summary file name"""
        assert summary_path(tmp_path / "run.csv") == tmp_path / "run_summary.csv"


class TestRunExperiment:
    """Tests for single benchmark runs"""

    def test_reproducible(self):
        """Test that the cell seed fixes the score"""
        cell = Cell(model="mean", method="ADVI", n_data=20, seed=4)
        a = run_experiment(cell, max_steps=15, posterior_draws=200)
        b = run_experiment(cell, max_steps=15, posterior_draws=200)
        assert not a.failed
        assert a.mse == b.mse
        assert a.t_train_s > 0.0 and a.t_sample_s > 0.0

    def test_diffusion_cell(self):
        """Test that a DMVI cell reports its solver settings"""
        cell = Cell(model="hierarchical1", method="DMVI", n_data=10, seed=0, n_diff=50, n_steps=2, n_order=3)
        row = run_experiment(cell, max_steps=2, posterior_draws=20)
        assert not row.failed
        assert (row.n_diff, row.n_steps, row.n_order) == (50, 2, 3)
        assert np.isfinite(row.mse)

    def test_failure_is_flagged(self):
        """Test that engine errors become failed rows"""
        row = run_experiment(Cell(model="poisson", method="ADVI", n_data=10, seed=0))
        assert row.failed
        assert "poisson" in row.error
        assert row.mse is None

    def test_crash_is_flagged(self, monkeypatch):
        """Test that unexpected exceptions become failed rows"""

        def boom(*args, **kwargs):
            raise RuntimeError("boom")

        monkeypatch.setattr(bench, "train", boom)
        row = run_experiment(Cell(model="mean", method="NFVI", n_data=10, seed=0), max_steps=1)
        assert row.failed
        assert row.error == "RuntimeError: boom"


class TestRunSweep:
    """Tests for the sweep driver"""

    def test_deterministic(self):
        """Test that two sweeps give the same scores in grid order"""
        config = SweepConfig(models=["mean"], methods=["ADVI"], n_data=[20], replicates=2, max_steps=10,
                             posterior_draws=100)
        first = run_sweep(config)
        second = run_sweep(config)
        assert [r.seed for r in first] == [0, 1]
        assert [r.mse for r in first] == [r.mse for r in second]


@pytest.mark.slow
class TestMethodOrdering:
    """Tests for diffusion-guide versus mean-field scores at N=100 over five seeds"""

    def _median_mse(self, model, method, **solver):
        rows = [
            run_experiment(Cell(model=model, method=method, n_data=100, seed=seed, **solver), max_steps=4000)
            for seed in range(5)
        ]
        assert not any(row.failed for row in rows)
        return float(np.median([row.mse for row in rows]))

    @pytest.mark.xfail(strict=False, reason="ordering is not guaranteed at the reduced step budget")
    def test_hierarchical_diffusion_beats_advi(self):
        """Test that the diffusion guide halves the ADVI median MSE on the deepest hierarchy"""
        dmvi = self._median_mse("hierarchical5", "DMVI", n_diff=50, n_steps=10, n_order=3)
        advi = self._median_mse("hierarchical5", "ADVI")
        assert dmvi < 0.5 * advi

    @pytest.mark.xfail(strict=False, reason="ordering is not guaranteed at the reduced step budget")
    def test_mixture_diffusion_beats_advi(self):
        """Test that the diffusion guide scores below ADVI on the mixture after component matching"""
        dmvi = self._median_mse("mixture", "DMVI", n_diff=50, n_steps=10, n_order=3)
        advi = self._median_mse("mixture", "ADVI")
        assert dmvi < advi
