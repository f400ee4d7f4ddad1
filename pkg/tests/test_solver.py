"""
Probability-flow ODE solver tests
"""

import numpy as np
import pytest
from pydantic import ValidationError

from dmvi.autodiff import Tensor
from dmvi.errors import ConfigurationError
from dmvi.schedule import NoiseSchedule, make_linear_schedule
from dmvi.solver import SolverConfig, dpm_solve, lambda_grid


def gaussian_noise_oracle(schedule: NoiseSchedule, mean: float, std: float):
    """Exact E[eps | x_tau] for data N(mean, std^2), evaluated on the continuous schedule."""

    def noise_model(x: Tensor, tau: float) -> Tensor:
        alpha, sigma = schedule.alpha_sigma_from_lambda(schedule.lambda_at_time(tau))
        return (x - alpha * mean) * (sigma / (alpha**2 * std**2 + sigma**2))

    return noise_model


def _solve_unit(schedule, steps, order):
    x_init = Tensor(np.ones((1, 1)))
    out = dpm_solve(gaussian_noise_oracle(schedule, 0.0, 1.0), schedule, x_init, SolverConfig(steps=steps, order=order))
    return out.item()


class TestSolverConfig:
    """Tests for solver settings validation"""

    def test_defaults(self):
        """Test the default step count and order"""
        config = SolverConfig()
        assert config.steps == 10
        assert config.order == 1

    @pytest.mark.parametrize("kwargs", [{"order": 2}, {"steps": 0}])
    def test_invalid(self, kwargs):
        """Test that unsupported orders and empty grids are rejected"""
        with pytest.raises(ValidationError):
            SolverConfig(**kwargs)

    def test_unchecked_order(self):
        """Test that the solver itself refuses an unsupported order"""
        schedule = make_linear_schedule(50, 1e-4, 0.02)
        config = SolverConfig.model_construct(steps=5, order=2)
        with pytest.raises(ConfigurationError):
            dpm_solve(lambda x, tau: x, schedule, Tensor(np.zeros((1, 1))), config)


class TestLambdaGrid:
    """Tests for the half log-SNR grid"""

    def test_endpoints_and_spacing(self):
        """Test that the grid runs uniformly from lambda_T to lambda_1"""
        schedule = make_linear_schedule(50, 1e-4, 0.02)
        grid = lambda_grid(schedule, 20)
        assert grid.shape == (21,)
        assert grid[0] == schedule.lambdas[-1]
        assert grid[-1] == pytest.approx(schedule.lambdas[0], abs=1e-12)
        np.testing.assert_allclose(np.diff(grid), np.diff(grid)[0], rtol=1e-9)

    def test_empty_grid(self):
        """Test that at least one step is needed"""
        with pytest.raises(ConfigurationError):
            lambda_grid(make_linear_schedule(50, 1e-4, 0.02), 0)


class TestDPMSolver:
    """Tests for first- and third-order integration"""

    @pytest.mark.parametrize("order,calls_per_step", [(1, 1), (3, 3)])
    def test_noise_evaluations(self, order, calls_per_step):
        """Test the number of noise-model calls and their time range"""
        schedule = make_linear_schedule(50, 1e-4, 0.02)
        times = []

        def noise_model(x, tau):
            times.append(tau)
            return x * 0.0

        dpm_solve(noise_model, schedule, Tensor(np.ones((2, 3))), SolverConfig(steps=7, order=order))
        assert len(times) == 7 * calls_per_step
        assert times[0] == pytest.approx(50.0)
        assert all(1.0 <= tau <= 50.0 for tau in times)

    def test_zero_noise_rescales(self):
        """Test that a zero noise model gives x_1 = (alpha_1 / alpha_T) x_T"""
        schedule = make_linear_schedule(50, 1e-4, 0.02)
        out = dpm_solve(lambda x, tau: x * 0.0, schedule, Tensor(np.ones((1, 2))), SolverConfig(steps=10, order=1))
        np.testing.assert_allclose(out.data, schedule.alphas[0] / schedule.alphas[-1], rtol=1e-9)

    def test_standard_normal_first_order(self):
        """Test the first-order variance drift on N(0, I) data"""
        schedule = make_linear_schedule(50, 1e-4, 0.02)
        fine = _solve_unit(schedule, 20, 1) ** 2
        coarse = _solve_unit(schedule, 10, 1) ** 2
        assert fine == pytest.approx(0.957, abs=0.02)
        assert coarse == pytest.approx(0.917, abs=0.03)
        assert coarse < fine < 1.0

    def test_third_order_beats_first_order(self):
        """Test that the third-order update keeps unit variance more closely"""
        schedule = make_linear_schedule(50, 1e-4, 0.02)
        first = abs(_solve_unit(schedule, 10, 1) ** 2 - 1.0)
        third = abs(_solve_unit(schedule, 10, 3) ** 2 - 1.0)
        assert third < first / 5.0
        assert third < 0.01

    def test_shifted_gaussian(self):
        """Test that N(m, s^2) data is transported to its noised marginal at t=1"""
        schedule = NoiseSchedule.from_betas(np.linspace(1e-3, 0.3, 50))
        mean, std = 1.0, 0.5
        z = np.linspace(-2.0, 2.0, 9)[:, None]
        alpha_T, sigma_T = schedule.alphas[-1], schedule.sigmas[-1]
        x_init = alpha_T * mean + np.sqrt(alpha_T**2 * std**2 + sigma_T**2) * z

        out = dpm_solve(
            gaussian_noise_oracle(schedule, mean, std),
            schedule,
            Tensor(x_init),
            SolverConfig(steps=20, order=3),
        )

        alpha_1, sigma_1 = schedule.alphas[0], schedule.sigmas[0]
        expected = alpha_1 * mean + np.sqrt(alpha_1**2 * std**2 + sigma_1**2) * z
        np.testing.assert_allclose(out.data, expected, atol=1e-2)

    @pytest.mark.parametrize("order", [1, 3])
    def test_deterministic(self, order, rng):
        """Test that identical inputs give identical outputs"""
        schedule = make_linear_schedule(50, 1e-4, 0.02)
        oracle = gaussian_noise_oracle(schedule, 0.3, 0.7)
        x = rng.standard_normal((4, 2))
        config = SolverConfig(steps=5, order=order)
        a = dpm_solve(oracle, schedule, Tensor(x), config).data
        b = dpm_solve(oracle, schedule, Tensor(x.copy()), config).data
        np.testing.assert_array_equal(a, b)

    def test_gradient_reaches_input(self):
        """Test that the trajectory stays on the graph"""
        schedule = make_linear_schedule(50, 1e-4, 0.02)
        x = Tensor(np.ones((1, 1)), requires_grad=True)
        out = dpm_solve(gaussian_noise_oracle(schedule, 0.0, 1.0), schedule, x, SolverConfig(steps=5, order=3))
        out.sum().backward()
        assert x.grad[0, 0] == pytest.approx(out.item(), rel=1e-9)
