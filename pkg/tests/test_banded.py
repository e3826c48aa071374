import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from sgadi import banded
from sgadi.banded import SingularMatrixError, TridiagonalMatrix, factor, solve


def random_dominant(rng, n, batch=None):
    shape = (n,) if batch is None else (batch, n)
    lo = rng.uniform(-1, 1, shape)
    up = rng.uniform(-1, 1, shape)
    d = (np.abs(lo) + np.abs(up) + rng.uniform(0.1, 2, shape)) * rng.choice([-1, 1], shape)
    return TridiagonalMatrix.from_triples(lo, d, up)


def test_identity():
    m = TridiagonalMatrix(np.zeros(4), np.ones(5), np.zeros(4))
    lu = factor(m)
    np.testing.assert_array_equal(lu.pivots, 1.0)
    np.testing.assert_array_equal(lu.mult, 0.0)
    rhs = np.arange(5.0)
    np.testing.assert_array_equal(solve(lu, rhs), rhs)


def test_second_difference_pivots():
    m = TridiagonalMatrix(-np.ones(3), 2 * np.ones(4), -np.ones(3))
    np.testing.assert_allclose(factor(m).pivots, [2, 3 / 2, 4 / 3, 5 / 4], rtol=1e-15)


def test_zero_matrix_is_singular():
    with pytest.raises(SingularMatrixError, match="row 0"):
        factor(TridiagonalMatrix(np.zeros(3), np.zeros(4), np.zeros(3)))


def test_zero_pivot_falls_back_to_pivoting(caplog):
    # [[0, 1], [1, 0]] needs a row swap
    m = TridiagonalMatrix(np.array([1.0]), np.zeros(2), np.array([1.0]))
    lu = factor(m)
    assert lu.pivot_fallback
    assert "falling back" in caplog.text
    np.testing.assert_allclose(solve(lu, np.array([2.0, 3.0])), [3.0, 2.0])


def test_dense_oracle_8x8():
    rng = np.random.default_rng(8)
    m = random_dominant(rng, 8)
    rhs = rng.normal(size=8)
    np.testing.assert_allclose(solve(factor(m), rhs), np.linalg.solve(m.todense(), rhs),
                               rtol=1e-12, atol=1e-14)
    x = solve(factor(m), m.matvec(np.ones(8)))
    np.testing.assert_allclose(x, 1.0, rtol=1e-12)


@pytest.mark.parametrize("n", [1, 2, 3, 17, 257])
def test_lu_reconstructs(n):
    rng = np.random.default_rng(n)
    m = random_dominant(rng, n)
    lu = factor(m)
    L = np.eye(n) + np.diag(lu.mult, -1)
    U = np.diag(lu.pivots) + np.diag(lu.upper, 1)
    A = m.todense()
    assert np.abs(L @ U - A).max() <= 1e-13 * np.abs(A).max()


@settings(max_examples=50)
@given(st.sampled_from([2, 3, 17, 257]), st.integers(0, 2**32 - 1))
def test_round_trip(n, seed):
    rng = np.random.default_rng(seed)
    m = random_dominant(rng, n)
    x = rng.normal(size=n)
    got = solve(factor(m), m.matvec(x))
    assert np.abs(got - x).max() <= 1e-10 * np.abs(x).max()


def test_batched_and_multi_rhs():
    rng = np.random.default_rng(3)
    m = random_dominant(rng, 12, batch=5)
    x = rng.normal(size=(5, 12))
    np.testing.assert_allclose(solve(factor(m), m.matvec(x)), x, rtol=1e-12, atol=1e-12)
    s = random_dominant(rng, 12)
    X = rng.normal(size=(12, 4))
    np.testing.assert_allclose(solve(factor(s), s.matvec(X)), X, rtol=1e-12, atol=1e-12)


def test_residual_bound():
    rng = np.random.default_rng(11)
    m = random_dominant(rng, 64)
    rhs = rng.normal(size=64)
    x = solve(factor(m), rhs)
    res = np.abs(m.matvec(x) - rhs).max()
    assert res <= 1e-10 * (m.norm() * np.abs(x).max() + np.abs(rhs).max())


def test_factor_deterministic():
    rng = np.random.default_rng(5)
    m = random_dominant(rng, 33, batch=4)
    a, b = factor(m), factor(m)
    for f in ("mult", "pivots", "upper"):
        assert getattr(a, f).tobytes() == getattr(b, f).tobytes()


def test_dimension_mismatch():
    lu = factor(random_dominant(np.random.default_rng(0), 6))
    with pytest.raises(ValueError):
        solve(lu, np.ones(5))
    with pytest.raises(ValueError):
        TridiagonalMatrix(np.ones(2), np.ones(4), np.ones(3))
    with pytest.raises(ValueError):
        TridiagonalMatrix(np.ones(3), np.array([1, np.inf, 1, 1.0]), np.ones(3))


def test_overwrite_solves_in_place():
    rng = np.random.default_rng(1)
    m = random_dominant(rng, 10)
    rhs = rng.normal(size=10)
    keep = rhs.copy()
    x = banded.solve(factor(m), rhs, overwrite=True)
    assert x is rhs
    np.testing.assert_allclose(m.matvec(x), keep, rtol=1e-12, atol=1e-12)
