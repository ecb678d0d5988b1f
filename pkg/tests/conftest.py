"""Shared fixtures and helpers for the test suite."""

import numpy as np
import pytest

import glassotune as gt


def make_instance(p: int, n: int, seed: int, density: float = 0.3):
    """Ground truth plus a 50-50 split dataset, seeded like the CLI."""
    truth = gt.make_sparse_spd(p, density, seed=seed)
    samples = gt.sample_gaussian(truth, n, seed=seed + 1)
    data = gt.split_samples(samples, 0.5, seed=seed + 2)
    return truth, data


def random_spd(rng: np.random.Generator, p: int, jitter: float = 0.5) -> np.ndarray:
    """Well-conditioned random SPD matrix."""
    a = rng.standard_normal((p, p))
    return a @ a.T + (p + jitter) * np.eye(p)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
