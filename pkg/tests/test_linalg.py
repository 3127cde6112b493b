import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from csen.errors import DataError, DimensionError, NumericError
from csen.linalg import (
    ProjectionMatrix,
    normalize_columns,
    pca_apply,
    pca_fit,
    ridge_denoiser,
    standardize_fit,
)


def brute_force_denoiser(D, lam):
    n = D.shape[1]
    return np.linalg.inv(D.T @ D + lam * np.eye(n)) @ D.T


# -- standardizer ------------------------------------------------------------

def test_standardizer_identity_on_standard_column():
    X = np.array([[-1.0], [1.0], [-1.0], [1.0]])
    s = standardize_fit(X)
    assert s.mean[0] == 0.0
    assert s.std[0] == 1.0


def test_standardizer_uses_population_std():
    s = standardize_fit(np.array([[1.0], [3.0]]))
    assert s.mean[0] == pytest.approx(2.0)
    assert s.std[0] == pytest.approx(1.0)


def test_standardizer_constant_column_guard():
    s = standardize_fit(np.array([[5.0], [5.0], [5.0]]))
    assert s.mean[0] == 5.0
    assert s.std[0] == 1.0
    np.testing.assert_array_equal(s.apply([[5.0]]), [[0.0]])


def test_standardizer_fit_data_is_standard():
    rng = np.random.default_rng(3)
    X = rng.normal(4.0, 7.0, size=(200, 6))
    Z = standardize_fit(X).apply(X)
    assert np.abs(Z.mean(axis=0)).max() < 1e-9
    assert np.abs(Z.var(axis=0) - 1).max() < 1e-6


def test_standardizer_rejects_empty_and_wrong_width():
    with pytest.raises(DimensionError):
        standardize_fit(np.zeros((0, 3)))
    s = standardize_fit(np.eye(3))
    with pytest.raises(DimensionError):
        s.apply(np.zeros((2, 4)))


# -- PCA ---------------------------------------------------------------------

def test_pca_shape_at_half_compression():
    X = np.random.default_rng(0).standard_normal((600, 1024))
    P = pca_fit(X, 512)
    assert P.A.shape == (512, 1024)
    assert (P.m, P.d) == (512, 1024)


def test_pca_first_direction_on_diagonal_line():
    rng = np.random.default_rng(1)
    t = rng.standard_normal(500)
    X = np.column_stack([t, t]) + 1e-3 * rng.standard_normal((500, 2))
    P = pca_fit(X, 1)
    u = np.array([1.0, 1.0]) / np.sqrt(2)
    angle = np.arccos(min(1.0, abs(P.A[0] @ u)))
    assert angle < 1e-3


def test_pca_rows_orthonormal_and_sorted():
    X = np.random.default_rng(2).standard_normal((80, 12)) @ np.diag(np.arange(1, 13))
    P = pca_fit(X, 7)
    np.testing.assert_allclose(P.A @ P.A.T, np.eye(7), atol=1e-6)
    assert np.all(np.diff(P.eigenvalues) <= 0)


def test_pca_matches_svd_oracle():
    X = np.random.default_rng(4).standard_normal((50, 6)) @ np.diag([6, 5, 4, 3, 2, 1])
    P = pca_fit(X, 3)
    _, s, Vt = np.linalg.svd(X - X.mean(axis=0), full_matrices=False)
    np.testing.assert_allclose(np.abs(P.A), np.abs(Vt[:3]), atol=1e-10)
    np.testing.assert_allclose(P.eigenvalues, s[:3] ** 2 / (X.shape[0] - 1), rtol=1e-10)


def test_pca_sign_convention():
    X = np.random.default_rng(5).standard_normal((40, 5))
    P = pca_fit(X, 5)
    for row in P.A:
        assert row[np.argmax(np.abs(row))] > 0


def test_pca_full_rank_preserves_distances():
    X = np.random.default_rng(6).standard_normal((30, 8))
    P = pca_fit(X, 8)
    Y = pca_apply(P, X)
    dx = np.linalg.norm(X[:, None] - X[None], axis=-1)
    dy = np.linalg.norm(Y[:, None] - Y[None], axis=-1)
    assert np.abs(dx - dy).max() < 1e-6


def test_pca_reconstruction_error_non_increasing():
    X = np.random.default_rng(7).standard_normal((60, 10)) @ np.random.default_rng(8).standard_normal((10, 10))
    errs = []
    for m in range(1, 11):
        P = pca_fit(X, m)
        Y = pca_apply(P, X)
        R = Y @ P.A + P.mean
        errs.append(np.mean((X - R) ** 2))
    assert all(b <= a + 1e-12 for a, b in zip(errs, errs[1:]))


def test_pca_m_out_of_range():
    X = np.random.default_rng(0).standard_normal((5, 8))
    with pytest.raises(DimensionError):
        pca_fit(X, 0)
    with pytest.raises(DimensionError):
        pca_fit(X, 6)


def test_pca_apply_centering_eigenvector_and_batch():
    rng = np.random.default_rng(9)
    X = rng.standard_normal((100, 4)) @ np.diag([4.0, 3.0, 2.0, 1.0])
    P = pca_fit(X, 4)
    np.testing.assert_allclose(pca_apply(P, P.mean), np.zeros(4), atol=1e-12)
    coords = pca_apply(P, P.mean + P.A[1])
    np.testing.assert_allclose(coords, np.eye(4)[1], atol=1e-12)
    batch = pca_apply(P, X[:5])
    rows = np.array([pca_apply(P, x) for x in X[:5]])
    np.testing.assert_allclose(batch, rows, atol=1e-12)
    with pytest.raises(DimensionError):
        pca_apply(P, np.zeros(3))


def test_pca_is_deterministic():
    X = np.random.default_rng(10).standard_normal((30, 6))
    a, b = pca_fit(X, 3), pca_fit(X, 3)
    assert np.array_equal(a.A, b.A) and np.array_equal(a.mean, b.mean)


# -- ridge denoiser ----------------------------------------------------------

def test_ridge_identity_dictionary():
    B = ridge_denoiser(np.eye(5), 1e-12)
    np.testing.assert_allclose(B, np.eye(5), atol=1e-6)


def test_ridge_matches_direct_inverse():
    D = np.random.default_rng(11).standard_normal((3, 5))
    np.testing.assert_allclose(ridge_denoiser(D, 0.1), brute_force_denoiser(D, 0.1), atol=1e-8)


def test_ridge_full_scale_shape():
    D = normalize_columns(np.random.default_rng(12).standard_normal((512, 2500)))
    B = ridge_denoiser(D, 2e-12)
    assert B.shape == (2500, 512)
    assert np.all(np.isfinite(B))


@pytest.mark.parametrize("lam", [1e-6, 1e-2, 1.0])
def test_ridge_primal_dual_agree(lam):
    rng = np.random.default_rng(13)
    for _ in range(10):
        m, n = rng.integers(1, 31, size=2)
        D = rng.standard_normal((m, n))
        P = ridge_denoiser(D, lam, form="primal")
        Q = ridge_denoiser(D, lam, form="dual")
        assert np.abs(P - Q).max() < 1e-8


def test_ridge_optimality_residual():
    rng = np.random.default_rng(14)
    for _ in range(20):
        m, n = rng.integers(1, 31, size=2)
        D = rng.standard_normal((m, n))
        lam = 10.0 ** rng.uniform(-3, 0)
        y = rng.standard_normal(m)
        x = ridge_denoiser(D, lam) @ y
        r = D.T @ (D @ x - y) + lam * x
        assert np.abs(r).max() < 1e-6 * (1 + np.linalg.norm(y))


def test_ridge_rejects_bad_lambda_and_form():
    with pytest.raises(ValueError):
        ridge_denoiser(np.eye(2), 0.0)
    with pytest.raises(ValueError):
        ridge_denoiser(np.eye(2), 1.0, form="cholesky")


def test_ridge_non_finite_input_is_numeric_error():
    D = np.eye(3)
    D[0, 0] = np.inf
    with pytest.raises((NumericError, DataError)):
        ridge_denoiser(D, 1e-3)


# -- column normalization ----------------------------------------------------

def test_normalize_345():
    np.testing.assert_allclose(normalize_columns(np.array([[3.0], [4.0]])), [[0.6], [0.8]])


def test_normalize_idempotent_and_unit():
    M = np.random.default_rng(15).standard_normal((4, 6))
    N = normalize_columns(M)
    np.testing.assert_allclose(np.linalg.norm(N, axis=0), 1.0, atol=1e-9)
    np.testing.assert_allclose(normalize_columns(N), N, atol=1e-12)


def test_normalize_zero_column_named():
    M = np.ones((3, 4))
    M[:, 2] = 0
    with pytest.raises(DataError, match="column 2"):
        normalize_columns(M)


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 12), st.integers(1, 12), st.sampled_from([1e-6, 1e-2, 1.0]),
       st.integers(0, 2**31 - 1))
def test_property_woodbury(m, n, lam, seed):
    D = np.random.default_rng(seed).standard_normal((m, n))
    np.testing.assert_allclose(ridge_denoiser(D, lam, form="primal"),
                               ridge_denoiser(D, lam, form="dual"), atol=1e-8, rtol=0)


@settings(max_examples=30, deadline=None)
@given(st.integers(3, 40), st.integers(1, 8), st.integers(0, 2**31 - 1))
def test_property_pca_orthonormal(n, d, seed):
    X = np.random.default_rng(seed).standard_normal((n, d))
    m = min(n, d)
    P = pca_fit(X, m)
    np.testing.assert_allclose(P.A @ P.A.T, np.eye(m), atol=1e-6)
    assert isinstance(P, ProjectionMatrix)
