"""Shared builders for the test suite.  Everything is deterministic."""

import numpy as np
import pytest

from nlc2d import manifold as mf
from nlc2d.grid import Grid2D


def smooth_sphere_field(grid: Grid2D) -> np.ndarray:
    """Smooth unit field with nontrivial structure in both directions."""
    x, y = grid.meshgrid()
    th = 0.8 * np.sin(2 * np.pi * x) * np.sin(2 * np.pi * y)
    ph = 2 * np.pi * (x + 0.3 * np.cos(2 * np.pi * y))
    return np.stack(
        [np.sin(th) * np.cos(ph), np.sin(th) * np.sin(ph), np.cos(th)],
        axis=-1,
    )


def taylor_green_velocity(grid: Grid2D) -> np.ndarray:
    x, y = grid.meshgrid()
    return np.stack(
        [
            np.sin(2 * np.pi * x) * np.cos(2 * np.pi * y),
            -np.cos(2 * np.pi * x) * np.sin(2 * np.pi * y),
        ],
        axis=-1,
    )


def random_frames(rng, count: int) -> np.ndarray:
    """Orthonormal pairs built by Gram-Schmidt; exact to machine epsilon."""
    n = rng.normal(size=(count, 3))
    n /= np.linalg.norm(n, axis=-1, keepdims=True)
    m = rng.normal(size=(count, 3))
    m -= np.sum(m * n, axis=-1, keepdims=True) * n
    m /= np.linalg.norm(m, axis=-1, keepdims=True)
    return np.concatenate([n, m], axis=-1)


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)


@pytest.fixture
def sphere():
    return mf.ManifoldSpec(mf.SPHERE)


@pytest.fixture
def biaxial():
    return mf.ManifoldSpec(mf.BIAXIAL)
