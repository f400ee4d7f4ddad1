"""
AdamW optimizer tests
"""

import numpy as np
import pytest

from dmvi.errors import NumericFailureError
from dmvi.nn import ParamStore
from dmvi.optim import adamw_step


def _store(**values):
    store = ParamStore()
    for name, value in values.items():
        store.add(name, np.asarray(value, dtype=np.float64))
    return store


class TestAdamW:
    """Tests for decoupled weight decay and bias-corrected moments"""

    def test_first_step(self):
        """Test the closed form of the first update"""
        store = _store(w=[1.0, -2.0, 0.5])
        grad = np.array([0.3, -4.0, 0.0])
        adamw_step(store, {"w": grad}, lr=0.1, weight_decay=0.01)
        expected = np.array([1.0, -2.0, 0.5]) * (1.0 - 0.1 * 0.01) - 0.1 * grad / (np.abs(grad) + 1e-8)
        np.testing.assert_allclose(store["w"].data, expected, rtol=1e-12)
        assert store.state["w"].step == 1

    def test_decay_without_gradient(self):
        """Test that a zero gradient leaves only the decay"""
        store = _store(w=[2.0])
        adamw_step(store, {"w": np.zeros(1)}, lr=0.5, weight_decay=0.1)
        np.testing.assert_allclose(store["w"].data, [2.0 * 0.95])

    def test_moments_follow_recurrence(self):
        """Test two steps of the moment recurrences"""
        store = _store(w=[0.0])
        g1, g2 = np.array([1.0]), np.array([3.0])
        adamw_step(store, {"w": g1}, lr=1e-3)
        adamw_step(store, {"w": g2}, lr=1e-3)
        state = store.state["w"]
        np.testing.assert_allclose(state.m, 0.9 * 0.1 * g1 + 0.1 * g2)
        np.testing.assert_allclose(state.v, 0.999 * 0.001 * g1**2 + 0.001 * g2**2)
        assert state.step == 2

    def test_parameters_are_independent(self):
        """Test that each parameter only uses its own state"""
        store = _store(a=[1.0], b=[1.0])
        adamw_step(store, {"a": np.array([1.0]), "b": np.array([0.0])}, lr=0.1, weight_decay=0.0)
        assert store["a"].data[0] == pytest.approx(0.9, abs=1e-7)
        assert store["b"].data[0] == 1.0

    def test_non_finite_gradient(self):
        """Test that a NaN gradient names the parameter"""
        store = _store(w=[1.0])
        with pytest.raises(NumericFailureError) as info:
            adamw_step(store, {"w": np.array([np.nan])}, lr=0.1)
        assert info.value.where == "w"

    def test_non_finite_gradient_leaves_store_untouched(self):
        """Test that a NaN in a later gradient stops the step before any parameter moves"""
        store = _store(a=[1.0, 1.0], b=[2.0, 2.0])
        with pytest.raises(NumericFailureError) as info:
            adamw_step(store, {"a": np.ones(2), "b": np.array([np.nan, 1.0])}, lr=0.1)
        assert info.value.where == "b"
        np.testing.assert_array_equal(store["a"].data, [1.0, 1.0])
        np.testing.assert_array_equal(store.state["a"].m, 0.0)
        assert store.state["a"].step == 0
        assert store.state["b"].step == 0

    def test_descends_quadratic(self):
        """Test convergence on a simple bowl"""
        store = _store(w=[3.0, -2.0])
        for _ in range(2000):
            adamw_step(store, {"w": 2.0 * store["w"].data}, lr=0.05, weight_decay=0.0)
        np.testing.assert_allclose(store["w"].data, 0.0, atol=0.1)
