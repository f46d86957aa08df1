import numpy as np
import pytest

from rwns.field import PeriodicGrid


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def grid64():
    return PeriodicGrid(1, 64, 40.0)


def random_field(rng, shape, scale=1.0):
    return scale * (rng.standard_normal(shape) + 1j * rng.standard_normal(shape))


def circulant_index(n):
    return np.subtract.outer(np.arange(n), np.arange(n)) % n


def dense_exchange(kernel_values, v, dx):
    """Brute-force sum_j K(x_i - x_j)(v_j - v_i) dx."""
    mat = kernel_values[circulant_index(len(v))] * dx
    return mat @ v - mat.sum(axis=1) * v


def dense_qk(kernel_values, v, dx):
    diff = np.abs(v[:, None] - v[None, :]) ** 2
    return 0.5 * np.sum(kernel_values[circulant_index(len(v))] * diff) * dx**2
