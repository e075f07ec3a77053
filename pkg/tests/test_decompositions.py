import numpy as np
import pytest

from numerics.decompositions import numerical_rank, orthonormality_residual, qr, reconstruct, svd
from numerics.errors import ConvergenceError, NonFiniteError, RankError
from numerics.matrix import frobenius
from tests.conftest import elimination_rank


def _check_factors(w, f):
    d1, d2 = w.shape
    assert f.u.shape == (d1, d1)
    assert f.v.shape == (d2, d2)
    assert f.s.shape == (min(d1, d2),)
    scale = max(frobenius(w), 1.0)
    assert frobenius(reconstruct(f) - w) <= 1e-10 * scale
    assert orthonormality_residual(f.u) <= 1e-10 * d1
    assert orthonormality_residual(f.v) <= 1e-10 * d2
    assert np.all(f.s >= 0)
    assert np.all(np.diff(f.s) <= 0)


def test_two_hundred_random_matrices():
    for seed in range(200):
        rng = np.random.default_rng(seed)
        d1, d2 = (int(x) for x in rng.integers(1, 33, size=2))
        w = rng.standard_normal((d1, d2))
        f = svd(w)
        _check_factors(w, f)
        assert np.allclose(f.s, np.linalg.svd(w, compute_uv=False), rtol=0, atol=1e-10 * frobenius(w))


@pytest.mark.parametrize("shape", [(1, 1), (1, 5), (5, 1), (3, 7), (7, 3)])
def test_degenerate_shapes(shape, rng):
    w = rng.standard_normal(shape)
    _check_factors(w, svd(w))


def test_zero_matrix():
    f = svd(np.zeros((4, 3)))
    assert np.all(f.s == 0)
    _check_factors(np.zeros((4, 3)), f)
    assert numerical_rank(np.zeros((4, 3))) == 0


def test_rank_deficient_matrix_gets_exact_zeros(rng):
    w = rng.standard_normal((6, 2)) @ rng.standard_normal((2, 5))
    f = svd(w)
    _check_factors(w, f)
    assert np.all(f.s[2:] == 0.0)


def test_sign_convention(rng):
    for _ in range(20):
        w = rng.standard_normal((5, 4))
        f = svd(w)
        lead = f.u[np.argmax(np.abs(f.u), axis=0), np.arange(5)]
        assert np.all(lead >= 0)


def test_svd_is_deterministic(rng):
    w = rng.standard_normal((9, 6))
    a, b = svd(w), svd(w)
    assert np.array_equal(a.u, b.u) and np.array_equal(a.s, b.s) and np.array_equal(a.v, b.v)


def test_repeated_singular_values(rng):
    w = np.diag([2.0, 2.0, 1.0])
    f = svd(w)
    _check_factors(w, f)
    assert np.allclose(f.s, [2.0, 2.0, 1.0])


def test_non_finite_input_rejected():
    with pytest.raises(NonFiniteError):
        svd(np.array([[1.0, np.inf]]))


def test_sweep_limit_raises(rng):
    with pytest.raises(ConvergenceError) as info:
        svd(rng.standard_normal((12, 12)), max_sweeps=1)
    assert info.value.sweeps == 1
    assert info.value.residual > 0


@pytest.mark.parametrize("shape", [(6, 4), (4, 6), (5, 5), (1, 3)])
def test_qr(shape, rng):
    w = rng.standard_normal(shape)
    q, r = qr(w)
    assert frobenius(q @ r - w) <= 1e-12 * frobenius(w)
    assert orthonormality_residual(q) <= 1e-12
    assert np.allclose(np.tril(r, -1), 0)
    assert np.all(np.diag(r) >= 0)
    q_full, r_full = qr(w, complete=True)
    assert q_full.shape == (shape[0], shape[0])
    assert frobenius(q_full @ r_full - w) <= 1e-12 * frobenius(w)


def test_numerical_rank_matches_elimination(rng):
    for r in range(0, 5):
        w = rng.standard_normal((7, r)) @ rng.standard_normal((r, 6)) if r else np.zeros((7, 6))
        assert numerical_rank(w) == elimination_rank(w) == r


def test_numerical_rank_rejects_bad_tolerance():
    with pytest.raises(RankError):
        numerical_rank(np.eye(2), tol=0.0)


@pytest.mark.parametrize("scale", [1e-170, 1e-160, 1e160, 1e300])
def test_extreme_scales(scale):
    w = np.array([[3.0, 1.0], [1.0, 2.0]]) * scale
    f = svd(w)
    expected = np.linalg.svd(np.array([[3.0, 1.0], [1.0, 2.0]]), compute_uv=False) * scale
    np.testing.assert_allclose(f.s, expected, rtol=1e-12)
    assert frobenius(reconstruct(f) - w) <= 1e-10 * frobenius(w)
    assert numerical_rank(w) == 2


def test_frobenius_survives_extreme_scales():
    assert frobenius(np.array([[3e-170, 4e-170]])) == pytest.approx(5e-170, rel=1e-15)
    assert frobenius(np.array([[3e200, 4e200]])) == pytest.approx(5e200, rel=1e-15)


def test_svd_of_diagonal_with_negative_entry():
    f = svd(np.diag([3.0, -2.0]))
    np.testing.assert_allclose(f.s, [3.0, 2.0], atol=1e-15)
    np.testing.assert_allclose(f.u, np.eye(2), atol=1e-15)
    np.testing.assert_allclose(f.v, np.diag([1.0, -1.0]), atol=1e-15)


def test_svd_of_identity():
    f = svd(np.eye(3))
    np.testing.assert_allclose(f.s, np.ones(3), atol=1e-15)
    np.testing.assert_allclose(reconstruct(f), np.eye(3), atol=1e-15)
    np.testing.assert_allclose(f.u @ f.v.T, np.eye(3), atol=1e-15)


@pytest.mark.parametrize("seed", range(20))
def test_svd_is_idempotent_on_its_reconstruction(seed):
    rng = np.random.default_rng(seed)
    d1, d2 = (int(x) for x in rng.integers(2, 10, size=2))
    first = svd(rng.standard_normal((d1, d2)))
    second = svd(reconstruct(first))
    k = first.min_dim
    np.testing.assert_allclose(second.s, first.s, atol=1e-12 * first.s[0])
    np.testing.assert_allclose(second.u[:, :k], first.u[:, :k], atol=1e-8)
    np.testing.assert_allclose(second.v[:, :k], first.v[:, :k], atol=1e-8)


@pytest.mark.parametrize("seed", range(20))
def test_numerical_rank_is_rotation_invariant(seed):
    rng = np.random.default_rng(seed)
    d1, d2 = (int(x) for x in rng.integers(2, 10, size=2))
    r = int(rng.integers(1, min(d1, d2) + 1))
    w = rng.standard_normal((d1, r)) @ rng.standard_normal((r, d2))
    left, _ = qr(rng.standard_normal((d1, d1)))
    right, _ = qr(rng.standard_normal((d2, d2)))
    assert numerical_rank(w) == r
    assert numerical_rank(left @ w @ right) == r
