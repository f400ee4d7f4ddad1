"""
Shared fixtures for the dmvi test suite
"""

from collections.abc import Callable

import numpy as np
import pytest

from dmvi import autodiff as ad
from dmvi.autodiff import Tensor
from dmvi.models import MeanModel


def relative_error(analytic: np.ndarray, numeric: np.ndarray) -> float:
    analytic, numeric = np.asarray(analytic), np.asarray(numeric)
    scale = max(np.linalg.norm(numeric), np.linalg.norm(analytic), 1e-8)
    return float(np.linalg.norm(analytic - numeric) / scale)


def gradient_pair(loss: Callable[[], Tensor], tensor: Tensor, h: float = 1e-5) -> tuple[np.ndarray, np.ndarray]:
    """
    (autodiff gradient, central finite differences) of loss() w.r.t. one leaf tensor.

    loss must rebuild its graph from scratch on every call and be deterministic.
    """
    _, grads = ad.evaluate_with_gradient(lambda params: loss(), {"x": tensor})
    original = tensor.data.copy()

    def f(x: np.ndarray) -> float:
        tensor.data = x
        with ad.no_grad():
            return float(loss().data)

    numeric = ad.numerical_gradient(f, original, h=h)
    tensor.data = original
    return grads["x"], numeric


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(20240611)


@pytest.fixture
def mean_model_2d() -> MeanModel:
    return MeanModel(data_dim=2)


@pytest.fixture
def mean_dataset_2d(mean_model_2d):
    return mean_model_2d.simulate(11, 100)
