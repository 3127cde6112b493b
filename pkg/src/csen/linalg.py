"""Dense linear-algebra kernels: standardization, PCA and the ridge denoiser.

Matrices are plain 2-D float64 numpy arrays. The fitted transforms are small
frozen dataclasses so they can be shared between threads and serialized.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .errors import DataError, DimensionError, NumericError, ParameterError


def _as_matrix(X, name="X") -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2:
        raise DimensionError(f"{name} must be 2-D, got shape {X.shape}")
    if X.size == 0:
        raise DimensionError(f"{name} is empty (shape {X.shape})")
    if not np.all(np.isfinite(X)):
        raise DataError(f"{name} contains non-finite values")
    return X


@dataclass(frozen=True)
class Standardizer:
    """Per-feature affine map to zero mean and unit (population) variance."""

    mean: np.ndarray
    std: np.ndarray

    @property
    def dim(self) -> int:
        return self.mean.shape[0]

    def apply(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        if X.shape[-1] != self.dim:
            raise DimensionError(
                f"expected {self.dim} features, got {X.shape[-1]}")
        return (X - self.mean) / self.std


def standardize_fit(X) -> Standardizer:
    """Fit a :class:`Standardizer` on the rows of ``X``.

    Zero-variance columns keep std = 1 so constant features pass through
    centred but unscaled.
    """
    X = _as_matrix(X)
    mean = X.mean(axis=0)
    std = X.std(axis=0)
    std = np.where(std > 1e-12 * np.maximum(1.0, np.abs(mean)), std, 1.0)
    return Standardizer(mean=mean, std=std)


@dataclass(frozen=True)
class ProjectionMatrix:
    """PCA projection ``y = A (s - mean)`` with orthonormal rows in ``A``."""

    A: np.ndarray
    mean: np.ndarray
    eigenvalues: np.ndarray

    @property
    def m(self) -> int:
        return self.A.shape[0]

    @property
    def d(self) -> int:
        return self.A.shape[1]

    def apply(self, S) -> np.ndarray:
        return pca_apply(self, S)


def pca_fit(X, m: int) -> ProjectionMatrix:
    """Top-``m`` principal directions of the sample covariance of ``X``.

    Each direction is sign-fixed so that its largest-magnitude entry is
    positive.
    """
    X = _as_matrix(X)
    n_samples, d = X.shape
    if not 1 <= m <= min(n_samples, d):
        raise DimensionError(
            f"m={m} out of range [1, {min(n_samples, d)}] for data {X.shape}")
    mean = X.mean(axis=0)
    Xc = X - mean
    cov = Xc.T @ Xc / max(n_samples - 1, 1)
    try:
        evals, evecs = np.linalg.eigh(cov)
    except np.linalg.LinAlgError as exc:
        raise NumericError(f"eigendecomposition failed: {exc}") from exc
    order = np.argsort(evals)[::-1][:m]
    A = evecs[:, order].T.copy()
    pivot = np.argmax(np.abs(A), axis=1)
    signs = np.sign(A[np.arange(m), pivot])
    signs[signs == 0] = 1.0
    A *= signs[:, None]
    return ProjectionMatrix(A=A, mean=mean, eigenvalues=evals[order].copy())


def pca_apply(P: ProjectionMatrix, S) -> np.ndarray:
    """Project one vector (shape ``(d,)``) or a batch (``(N, d)``)."""
    S = np.asarray(S, dtype=np.float64)
    if S.shape[-1] != P.d:
        raise DimensionError(f"expected length {P.d}, got {S.shape[-1]}")
    return (S - P.mean) @ P.A.T


def ridge_denoiser(D, lam: float, form: str = "auto") -> np.ndarray:
    """Regularized pseudo-inverse ``B = (D^T D + lam I)^-1 D^T``.

    With ``form="auto"`` the m x m dual system ``D^T (D D^T + lam I)^-1`` is
    solved whenever ``n > m``. At tiny ``lam`` the n x n primal matrix is
    rank-deficient up to the ridge and cannot be inverted reliably.
    """
    D = _as_matrix(D, "D")
    if not lam > 0:
        raise ParameterError(f"lambda must be positive, got {lam}")
    m, n = D.shape
    if form == "auto":
        form = "dual" if n > m else "primal"
    if form == "dual":
        G = D @ D.T + lam * np.eye(m)
        B = _spd_solve(G, D).T
    elif form == "primal":
        G = D.T @ D + lam * np.eye(n)
        B = _spd_solve(G, D.T)
    else:
        raise ParameterError(f"unknown form {form!r}")
    if not np.all(np.isfinite(B)):
        raise NumericError("ridge denoiser produced non-finite values")
    return B


def _spd_solve(G, rhs):
    with warnings.catch_warnings():
        warnings.simplefilter("error", scipy.linalg.LinAlgWarning)
        try:
            return scipy.linalg.solve(G, rhs, assume_a="pos")
        except (np.linalg.LinAlgError, scipy.linalg.LinAlgError,
                scipy.linalg.LinAlgWarning) as exc:
            raise NumericError(
                f"regularized system is singular to working precision: {exc}"
            ) from exc


def normalize_columns(M) -> np.ndarray:
    """Scale every column of ``M`` to unit l2 norm."""
    M = _as_matrix(M, "M")
    norms = np.linalg.norm(M, axis=0)
    zero = np.flatnonzero(norms == 0)
    if zero.size:
        raise DataError(f"column {int(zero[0])} is all zeros")
    return M / norms
