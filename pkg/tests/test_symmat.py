import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from atomglasso.symmat import (as_symmetric, dim_from_half,
                               duplication_matrix, half_dim, kron,
                               lower_pairs, mahalanobis_norm, opnorm_inf,
                               pinv, sym_sqrt, unvec, unvecp, vec, vecp)


def random_sym(rng, p, zero_diag=False):
    A = rng.standard_normal((p, p))
    A = A + A.T
    if zero_diag:
        np.fill_diagonal(A, 0.0)
    return A


def test_vecp_order_is_column_major_lower():
    X = np.arange(16.0).reshape(4, 4)
    X = X + X.T
    rows, cols = lower_pairs(4)
    assert list(zip(rows, cols)) == [(1, 0), (2, 0), (3, 0), (2, 1), (3, 1),
                                     (3, 2)]
    assert np.array_equal(vecp(X), X[rows, cols])


def test_vec_is_column_stacking():
    X = np.array([[1.0, 2.0], [3.0, 4.0]])
    assert np.array_equal(vec(X), [1.0, 3.0, 2.0, 4.0])
    assert np.array_equal(unvec(vec(X)), X)


def test_duplication_matrix_maps_vecp_to_vec():
    rng = np.random.default_rng(0)
    for p in (2, 3, 5):
        X = random_sym(rng, p, zero_diag=True)
        D = duplication_matrix(p)
        assert D.shape == (p * p, half_dim(p))
        assert np.allclose(D @ vecp(X), vec(X))


def test_duplication_matrix_preserves_max_norm():
    rng = np.random.default_rng(1)
    D = duplication_matrix(6)
    for _ in range(10):
        pi = rng.standard_normal(15)
        assert np.abs(D @ pi).max() == pytest.approx(np.abs(pi).max())


def test_duplication_matrix_is_read_only():
    D = duplication_matrix(3)
    with pytest.raises(ValueError):
        D[0, 0] = 5.0


def test_kron_vec_identity():
    rng = np.random.default_rng(2)
    a, X, c = (rng.standard_normal((3, 3)) for _ in range(3))
    assert np.allclose(vec(a @ X @ c), kron(c.T, a) @ vec(X))


def test_dim_roundtrip_and_errors():
    assert dim_from_half(half_dim(7)) == 7
    with pytest.raises(ValueError):
        dim_from_half(4)


def test_as_symmetric_validation():
    with pytest.raises(ValueError):
        as_symmetric(np.ones((2, 3)))
    with pytest.raises(ValueError):
        as_symmetric(np.array([[1.0, 2.0], [0.0, 1.0]]))
    with pytest.raises(ValueError):
        as_symmetric(np.array([[np.nan, 0.0], [0.0, 1.0]]))
    X = as_symmetric(np.array([[1.0, 2.0], [2.0 + 1e-12, 1.0]]), atol=1e-9)
    assert np.array_equal(X, X.T)


def test_pinv_rank_deficient_matches_numpy():
    rng = np.random.default_rng(3)
    A = rng.standard_normal((6, 3))
    G = A @ A.T
    assert np.allclose(pinv(G), np.linalg.pinv(G, hermitian=True), atol=1e-10)
    assert np.allclose(pinv(np.zeros((3, 3))), 0.0)


def test_opnorm_and_sqrt():
    A = np.array([[1.0, -2.0], [3.0, 0.5]])
    assert opnorm_inf(A) == 3.5
    S = np.array([[2.0, 0.5], [0.5, 1.0]])
    R = sym_sqrt(S)
    assert np.allclose(R @ R, S)
    with pytest.raises(ValueError):
        sym_sqrt(-S)


def test_mahalanobis_norm_against_kron_formula():
    rng = np.random.default_rng(4)
    p = 3
    A = rng.standard_normal((p, p))
    Sigma = A @ A.T + p * np.eye(p)
    K = np.linalg.inv(Sigma)
    x = vec(random_sym(rng, p))
    direct = np.sqrt(x @ np.linalg.solve(np.kron(Sigma, Sigma), x))
    assert mahalanobis_norm(x, K) == pytest.approx(direct)


@settings(max_examples=50, deadline=None)
@given(st.integers(2, 8).flatmap(
    lambda p: arrays(np.float64, half_dim(p),
                     elements=st.floats(-1e3, 1e3))))
def test_vecp_unvecp_roundtrip(h):
    X = unvecp(h)
    assert np.array_equal(X, X.T)
    assert np.array_equal(vecp(X), h)
    assert np.all(np.diag(X) == 0)
