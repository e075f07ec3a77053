from pathlib import Path

import numpy as np
import pytest

from training.tasks import make_task

GOLDEN = Path(__file__).parent / "golden"


def elimination_rank(a: np.ndarray, tol: float = 1e-9) -> int:
    """Rank by Gaussian elimination with partial pivoting, independent of any SVD"""
    a = np.array(a, dtype=np.float64)
    rows, cols = a.shape
    scale = max(float(np.abs(a).max()), 1e-300)
    rank = 0
    for c in range(cols):
        if rank == rows:
            break
        pivot = rank + int(np.argmax(np.abs(a[rank:, c])))
        if abs(a[pivot, c]) <= tol * scale:
            continue
        a[[rank, pivot]] = a[[pivot, rank]]
        a[rank + 1:] -= np.outer(a[rank + 1:, c] / a[rank, c], a[rank])
        rank += 1
    return rank


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def golden_dir() -> Path:
    return GOLDEN


@pytest.fixture
def small_task():
    return make_task(6, 5, "dense", seed=3, n_samples=12)


@pytest.fixture
def planted_task():
    return make_task(16, 16, "sparse_spectrum:12", seed=0, n_samples=64, noise_sigma=0.01)
