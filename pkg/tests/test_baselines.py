import numpy as np
import pytest

from adapters import baselines
from numerics.decompositions import numerical_rank
from numerics.errors import RankError, ShapeError, ZeroColumnError
from training.gradcheck import finite_diff_check
from training.tasks import make_task


def test_lora_starts_at_base(rng):
    w0 = rng.standard_normal((5, 4))
    a = baselines.init_lora(5, 4, 2, seed=0)
    x = rng.standard_normal((4, 3))
    assert np.array_equal(baselines.lora_forward(w0, a, x), w0 @ x)
    assert a.r == 2 and sum(p.size for p in a.parameters()) == 2 * (5 + 4)


def test_lora_rejects_zero_rank():
    with pytest.raises(RankError):
        baselines.init_lora(3, 3, 0)


def test_lora_forward_matches_weight(rng):
    w0 = rng.standard_normal((5, 4))
    a = baselines.init_lora(5, 4, 2, seed=1)
    a.b[:] = rng.standard_normal(a.b.shape)
    x = rng.standard_normal((4, 6))
    assert np.allclose(baselines.lora_forward(w0, a, x), (w0 + baselines.lora_delta(a)) @ x)
    with pytest.raises(ShapeError):
        baselines.lora_forward(w0, a, rng.standard_normal((5, 1)))


def test_vera_is_seeded_and_starts_at_base(rng):
    w0 = rng.standard_normal((5, 4))
    a = baselines.init_vera(5, 4, 3, seed=9)
    b = baselines.init_vera(5, 4, 3, seed=9)
    assert np.array_equal(a.a_hat, b.a_hat) and np.array_equal(a.b_hat, b.b_hat)
    assert np.all(baselines.vera_delta(a) == 0)
    assert np.allclose(a.lambda_d, 0.1)
    assert sum(p.size for p in a.parameters()) == 5 + 3


def test_vera_rank_one_sum_matches_matrix_form(rng):
    a = baselines.init_vera(6, 5, 3, seed=2)
    a.lambda_b[:] = rng.standard_normal(6)
    a.lambda_d[:] = rng.standard_normal(3)
    assert np.allclose(baselines.vera_rank_one_sum(a), baselines.vera_delta(a))


def test_vera_cannot_leave_row_space(rng):
    a = baselines.init_vera(6, 5, 2, seed=3)
    target = rng.standard_normal((6, 5))
    gap = baselines.vera_expressivity_gap(a, target)
    assert gap > 1e-3
    # whatever the scalings, the error never drops below the gap
    for _ in range(20):
        a.lambda_b[:] = rng.standard_normal(6)
        a.lambda_d[:] = rng.standard_normal(2)
        assert np.linalg.norm(baselines.vera_delta(a) - target) >= gap - 1e-12
    full = baselines.init_vera(6, 5, 5, seed=3)
    assert baselines.vera_expressivity_gap(full, target) <= 1e-10


def test_dora_starts_at_base(rng):
    w0 = rng.standard_normal((5, 4))
    a = baselines.init_dora(w0, 2, seed=0)
    assert np.allclose(baselines.dora_weight(w0, a), w0)
    assert np.allclose(a.m, np.linalg.norm(w0, axis=0))


def test_dora_columns_have_magnitude_m(rng):
    w0 = rng.standard_normal((5, 4))
    a = baselines.init_dora(w0, 2, seed=0)
    a.lora.b[:] = rng.standard_normal(a.lora.b.shape)
    a.m[:] = rng.uniform(0.5, 2.0, 4)
    assert np.allclose(np.linalg.norm(baselines.dora_weight(w0, a), axis=0), a.m)


def test_dora_zero_column_raises():
    w0 = np.array([[1.0, 0.0], [0.0, 0.0]])
    a = baselines.init_dora(np.array([[1.0, 1.0], [0.0, 1.0]]), 1, seed=0)
    with pytest.raises(ZeroColumnError):
        baselines.dora_weight(w0, a)


@pytest.mark.parametrize("method, limit", [("lora:2", 1e-5), ("vera:3", 1e-5), ("dora:2", 1e-4)])
def test_gradients_match_finite_differences(method, limit):
    for seed in range(20):
        task = make_task(5, 4, "dense", seed, n_samples=8)
        assert finite_diff_check(method, task, seed=seed) <= limit


@pytest.mark.parametrize("r", [1, 2, 3, 5])
def test_lora_update_rank_is_at_most_r(rng, r):
    a = baselines.init_lora(7, 6, r, seed=r)
    a.b[:] = rng.standard_normal(a.b.shape)
    assert numerical_rank(baselines.lora_delta(a)) <= r


def test_dora_output_scales_with_magnitude_on_a_single_column(rng):
    w0 = rng.standard_normal((5, 1))
    a = baselines.init_dora(w0, 1, seed=2)
    a.lora.b[:] = rng.standard_normal(a.lora.b.shape)
    x = rng.standard_normal((1, 4))
    before = baselines.dora_forward(w0, a, x)
    a.m[:] = 2.0 * a.m
    np.testing.assert_allclose(baselines.dora_forward(w0, a, x), 2.0 * before, rtol=1e-12)
