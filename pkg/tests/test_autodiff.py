"""
Reverse-mode autodiff tests
"""

import math

import numpy as np
import pytest
from scipy.special import erf

from dmvi import autodiff as ad
from dmvi.autodiff import Tensor
from dmvi.errors import ConfigurationError, NumericFailureError
from tests.conftest import gradient_pair, relative_error


def _leaf(rng, shape, low=-1.5, high=1.5):
    return Tensor(rng.uniform(low, high, size=shape), requires_grad=True)


class TestPrimitiveGradients:
    """Tests that each primitive matches central finite differences"""

    @pytest.mark.parametrize(
        "op",
        [
            lambda x: ad.exp(x),
            lambda x: ad.tanh(x),
            lambda x: ad.gelu(x),
            lambda x: ad.softplus(x),
            lambda x: x * x * 3.0 - x / 2.0,
            lambda x: ad.power(x, 3.0),
            lambda x: ad.logsumexp(x, axis=-1),
            lambda x: ad.layer_norm(x),
            lambda x: ad.concat([x, x * 2.0], axis=1),
            lambda x: ad.transpose(x) @ x,
            lambda x: ad.reshape(x, (-1,))[np.array([0, 0, 3])],
            lambda x: ad.tmean(x, axis=0),
        ],
    )
    def test_unary_compositions(self, rng, op):
        """Test that composed primitives have exact gradients"""
        x = _leaf(rng, (3, 4))
        weights = rng.standard_normal(op(Tensor(x.data)).shape)
        analytic, numeric = gradient_pair(lambda: ad.tsum(op(x) * weights), x)
        assert relative_error(analytic, numeric) < 1e-6

    def test_log_and_division(self, rng):
        """Test log and division on a positive domain"""
        x = _leaf(rng, (5,), low=0.5, high=2.0)
        analytic, numeric = gradient_pair(lambda: ad.tsum(ad.log(x) / (x + 1.0)), x)
        assert relative_error(analytic, numeric) < 1e-6

    def test_broadcast_gradients_are_summed(self):
        """Test that a broadcast operand receives the summed gradient"""
        a = Tensor(np.ones((4, 3)), requires_grad=True)
        b = Tensor(np.array([1.0, 2.0, 3.0]), requires_grad=True)
        (a * b).sum().backward()
        np.testing.assert_allclose(b.grad, [4.0, 4.0, 4.0])
        np.testing.assert_allclose(a.grad, np.tile([1.0, 2.0, 3.0], (4, 1)))

    def test_repeated_index_accumulates(self):
        """Test that fancy indexing with repeats accumulates gradient"""
        x = Tensor(np.arange(3.0), requires_grad=True)
        ad.tsum(x[np.array([0, 0, 2])]).backward()
        np.testing.assert_allclose(x.grad, [2.0, 0.0, 1.0])

    def test_clip_blocks_gradient_outside(self):
        """Test that clipped entries carry zero gradient"""
        x = Tensor(np.array([-10.0, 0.5, 10.0]), requires_grad=True)
        ad.tsum(ad.clip(x, -7.0, 7.0)).backward()
        np.testing.assert_allclose(x.grad, [0.0, 1.0, 0.0])

    def test_shared_subgraph(self):
        """Test that a node used twice gets both contributions"""
        x = Tensor(np.array(2.0), requires_grad=True)
        y = x * x
        (y + y).backward()
        assert x.grad == pytest.approx(8.0)


class TestForwardValues:
    """Tests for forward values of the numerical primitives"""

    def test_gelu_close_to_exact(self):
        """Test that the tanh gelu tracks the erf definition"""
        x = np.linspace(-5.0, 5.0, 201)
        exact = 0.5 * x * (1.0 + erf(x / math.sqrt(2.0)))
        assert np.max(np.abs(ad.gelu(x).data - exact)) < 1e-3

    def test_layer_norm_moments(self, rng):
        """Test zero mean and unit variance with the default epsilon"""
        out = ad.layer_norm(rng.normal(3.0, 2.0, size=(6, 256))).data
        np.testing.assert_allclose(out.mean(axis=-1), 0.0, atol=1e-12)
        np.testing.assert_allclose(out.var(axis=-1), 1.0, atol=1e-10)

    def test_layer_norm_constant_row(self, rng):
        """Test that a near-constant row stays finite and keeps an exact gradient"""
        x = Tensor(np.stack([2.0 + 1e-7 * rng.standard_normal(8), rng.standard_normal(8)]), requires_grad=True)
        out = ad.layer_norm(x).data
        assert np.all(np.isfinite(out))
        assert np.max(np.abs(out[0])) < 1e-2
        np.testing.assert_allclose(out[1].var(), 1.0, atol=1e-10)
        weights = rng.standard_normal((2, 8))
        analytic, numeric = gradient_pair(lambda: ad.tsum(ad.layer_norm(x) * weights), x)
        assert relative_error(analytic, numeric) < 1e-6

    def test_logsumexp_is_stable(self):
        """Test that large inputs do not overflow"""
        out = ad.logsumexp(np.array([1000.0, 1000.0]))
        assert out.item() == pytest.approx(1000.0 + math.log(2.0))

    def test_softplus_large_input(self):
        """Test softplus at large magnitude"""
        np.testing.assert_allclose(ad.softplus(np.array([-800.0, 800.0])).data, [0.0, 800.0], atol=1e-300)

    def test_matmul_shape_mismatch(self):
        """Test that incompatible shapes are rejected"""
        with pytest.raises(ConfigurationError):
            ad.matmul(np.ones((2, 3)), np.ones((2, 3)))

    def test_ndarray_left_operand(self):
        """Test that ndarray <op> Tensor stays on the graph"""
        x = Tensor(np.ones(3), requires_grad=True)
        out = np.array([1.0, 2.0, 3.0]) * x
        assert isinstance(out, Tensor)
        ad.tsum(out).backward()
        np.testing.assert_allclose(x.grad, [1.0, 2.0, 3.0])


class TestGradientMode:
    """Tests for graph recording control"""

    def test_no_grad_records_nothing(self):
        """Test that no_grad produces leaves without parents"""
        x = Tensor(np.ones(2), requires_grad=True)
        with ad.no_grad():
            y = ad.exp(x) * 2.0
        assert not y.requires_grad
        assert ad.is_grad_enabled()

    def test_evaluate_with_gradient_resets_grads(self):
        """Test that parameter grads are cleared after evaluation"""
        w = Tensor(np.array([1.0, -2.0]), requires_grad=True, name="w")
        value, grads = ad.evaluate_with_gradient(lambda p: ad.tsum(p["w"] * p["w"]), {"w": w})
        assert value == pytest.approx(5.0)
        np.testing.assert_allclose(grads["w"], [2.0, -4.0])
        assert w.grad is None

    def test_unused_parameter_gets_zero_gradient(self):
        """Test that parameters off the graph get zeros"""
        w = Tensor(np.ones(2), requires_grad=True)
        v = Tensor(np.ones(3), requires_grad=True)
        _, grads = ad.evaluate_with_gradient(lambda p: ad.tsum(p["w"]), {"w": w, "v": v})
        np.testing.assert_array_equal(grads["v"], np.zeros(3))

    def test_non_finite_value(self):
        """Test that a NaN objective is reported"""
        w = Tensor(np.array([-1.0]), requires_grad=True)
        with pytest.raises(NumericFailureError) as info:
            ad.evaluate_with_gradient(lambda p: ad.tsum(ad.log(p["w"])), {"w": w})
        assert info.value.where == "value"

    def test_non_finite_gradient_names_parameter(self):
        """Test that an infinite gradient names its parameter"""
        w = Tensor(np.array([0.0]), requires_grad=True)
        with pytest.raises(NumericFailureError) as info:
            ad.evaluate_with_gradient(lambda p: ad.tsum(ad.power(p["w"], 0.5)), {"w": w})
        assert info.value.where == "w"

    def test_non_scalar_objective(self):
        """Test that vector objectives are rejected"""
        w = Tensor(np.ones(2), requires_grad=True)
        with pytest.raises(ConfigurationError):
            ad.evaluate_with_gradient(lambda p: p["w"] * 2.0, {"w": w})


class TestNumericalGradient:
    """Tests for the finite-difference helper"""

    def test_quadratic(self):
        """Test central differences on a quadratic"""
        x = np.array([[1.0, -2.0], [0.5, 3.0]])
        grad = ad.numerical_gradient(lambda v: float((v**2).sum()), x)
        np.testing.assert_allclose(grad, 2.0 * x, rtol=1e-8)
