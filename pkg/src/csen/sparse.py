"""l1 recovery, support thresholding and representation-based classifiers."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.spatial.distance import cdist

from .dictionary import Dictionary
from .errors import DegenerateDecisionError, DimensionError, NumericError, ParameterError

KNN_METRICS = ("euclidean", "cityblock", "cosine")


@dataclass(frozen=True)
class SupportEstimate:
    p: np.ndarray
    tau: float
    mask: np.ndarray
    support: np.ndarray


def estimate_support(scores, tau: float) -> SupportEstimate:
    p = np.asarray(scores, dtype=np.float64)
    if not np.isfinite(tau):
        raise ParameterError(f"threshold must be finite, got {tau}")
    mask = p > tau
    return SupportEstimate(p, float(tau), mask, np.flatnonzero(mask))


@dataclass(frozen=True)
class SparseSolution:
    x_hat: np.ndarray
    iterations: int
    final_objective: float
    converged: bool


def soft_threshold(x, t):
    return np.sign(x) * np.maximum(np.abs(x) - t, 0.0)


def lasso_objective(D, y, x, lam) -> float:
    r = D @ x - y
    return 0.5 * float(r @ r) + lam * float(np.abs(x).sum())


def lipschitz_constant(D, n_iter: int = 100) -> float:
    """Largest eigenvalue of ``D^T D`` by power iteration."""
    v = np.random.default_rng(0).standard_normal(D.shape[1])
    v /= np.linalg.norm(v)
    L = 0.0
    for _ in range(n_iter):
        w = D.T @ (D @ v)
        L = float(np.linalg.norm(w))
        if L == 0.0:
            return 0.0
        v = w / L
    # Rayleigh quotient of the last iterate is a lower bound; pad slightly so
    # 1/L stays a valid step.
    return L * 1.01


def prox_grad_step(D, y, x, lam, L):
    return soft_threshold(x - D.T @ (D @ x - y) / L, lam / L)


def fista_l1(D, y, lambda_l1: float, max_iter: int = 1000, tol: float = 1e-8) -> SparseSolution:
    """Minimize ``0.5 ||D x - y||^2 + lambda_l1 ||x||_1`` by FISTA.

    Momentum is reset whenever the objective would increase, which keeps the
    iterates monotone without changing the fixed point. Stops once the
    relative objective change drops below ``tol``.
    """
    D = np.asarray(D, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if y.shape != (D.shape[0],):
        raise DimensionError(f"y has shape {y.shape}, expected ({D.shape[0]},)")
    if not lambda_l1 > 0:
        raise ParameterError(f"lambda_l1 must be positive, got {lambda_l1}")
    n = D.shape[1]
    L = lipschitz_constant(D)
    x = np.zeros(n)
    if L == 0.0:
        return SparseSolution(x, 1, lasso_objective(D, y, x, lambda_l1), True)
    z = x.copy()
    t = 1.0
    F_old = lasso_objective(D, y, x, lambda_l1)
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        x_new = prox_grad_step(D, y, z, lambda_l1, L)
        F_new = lasso_objective(D, y, x_new, lambda_l1)
        if F_new > F_old:
            t = 1.0
            x_new = prox_grad_step(D, y, x, lambda_l1, L)
            F_new = lasso_objective(D, y, x_new, lambda_l1)
        if not np.isfinite(F_new):
            raise NumericError(f"FISTA diverged at iteration {it}")
        t_new = 0.5 * (1.0 + np.sqrt(1.0 + 4.0 * t * t))
        z = x_new + ((t - 1.0) / t_new) * (x_new - x)
        change = abs(F_old - F_new)
        x, t = x_new, t_new
        if change <= tol * max(F_old, np.finfo(float).tiny):
            F_old = F_new
            converged = True
            break
        F_old = F_new
    return SparseSolution(x, it, lasso_objective(D, y, x, lambda_l1), converged)


@dataclass(frozen=True)
class ClassDecision:
    class_index: int
    scores: np.ndarray
    margin: float


def decide(scores, lower_is_better: bool) -> ClassDecision:
    """Pick the best class; ties go to the lowest index."""
    scores = np.asarray(scores, dtype=np.float64)
    keyed = scores if lower_is_better else -scores
    best = int(np.argmin(keyed))
    if scores.size > 1:
        rest = np.delete(keyed, best)
        margin = float(rest.min() - keyed[best])
    else:
        margin = float("inf")
    return ClassDecision(best, scores, margin)


def _class_residuals(dic: Dictionary, y, x, normalized: bool) -> np.ndarray:
    res = np.empty(dic.n_classes)
    for cls in range(dic.n_classes):
        cols = dic.class_columns(cls)
        xi = x[cols]
        r = float(np.linalg.norm(y - dic.D[:, cols] @ xi))
        if normalized:
            nx = float(np.linalg.norm(xi))
            r = r / nx if nx > 0 else np.inf
        res[cls] = r
    return res


SRC_LAMBDA_FACTOR = 0.3


def default_lambda_l1(D, y, factor: float = SRC_LAMBDA_FACTOR) -> float:
    """Scale-adaptive l1 weight ``factor * ||D^T y||_inf``."""
    return factor * float(np.max(np.abs(D.T @ y)))


def src_classify(dic: Dictionary, y, lambda_l1=None, max_iter: int = 1000,
                 tol: float = 1e-8, normalized_residual: bool = False,
                 lambda_factor: float = SRC_LAMBDA_FACTOR) -> ClassDecision:
    """Sparse-representation classification: l1 code, then per-class residual.

    ``y`` is scaled to unit norm first. Without an explicit ``lambda_l1`` the
    weight is ``lambda_factor * ||D^T y||_inf``; small factors let every
    class's atoms fit the noise and blur the residual gap.
    """
    y = np.asarray(y, dtype=np.float64)
    if y.shape != (dic.m,):
        raise DimensionError(f"query length {y.shape} != dictionary rows {dic.m}")
    ny = np.linalg.norm(y)
    if ny > 0:
        y = y / ny
    lam = default_lambda_l1(dic.D, y, lambda_factor) if lambda_l1 is None else lambda_l1
    if lam <= 0:
        # y orthogonal to every atom (or zero): nothing to represent.
        x = np.zeros(dic.n)
    else:
        x = fista_l1(dic.D, y, lam, max_iter, tol).x_hat
    res = _class_residuals(dic, y, x, normalized_residual)
    if np.all(np.isinf(res)):
        raise DegenerateDecisionError("all class coefficient groups are zero")
    return decide(res, lower_is_better=True)


def crc_residuals(dic: Dictionary, Y, normalized: bool = True) -> np.ndarray:
    """Per-class residuals for a batch of queries ``Y`` of shape ``(N, m)``."""
    Y = np.atleast_2d(np.asarray(Y, dtype=np.float64))
    if Y.shape[1] != dic.m:
        raise DimensionError(f"query length {Y.shape[1]} != dictionary rows {dic.m}")
    X = Y @ dic.B.T
    res = np.empty((Y.shape[0], dic.n_classes))
    for cls in range(dic.n_classes):
        cols = dic.class_columns(cls)
        Xi = X[:, cols]
        r = np.linalg.norm(Y - Xi @ dic.D[:, cols].T, axis=1)
        if normalized:
            nx = np.linalg.norm(Xi, axis=1)
            with np.errstate(divide="ignore", invalid="ignore"):
                r = np.where(nx > 0, r / nx, np.inf)
        res[:, cls] = r
    return res


def crc_classify(dic: Dictionary, y, normalized_residual: bool = True) -> ClassDecision:
    """Collaborative-representation classification with the precomputed
    denoiser; residuals are divided by the class coefficient norm unless
    ``normalized_residual`` is false."""
    y = np.asarray(y, dtype=np.float64)
    if y.shape != (dic.m,):
        raise DimensionError(f"query length {y.shape} != dictionary rows {dic.m}")
    res = crc_residuals(dic, y[None, :], normalized_residual)[0]
    if np.all(np.isinf(res)):
        raise DegenerateDecisionError("all class coefficient groups are zero")
    return decide(res, lower_is_better=True)


def crc_predict(dic: Dictionary, Y, normalized_residual: bool = True):
    """Batch CRC; returns ``(predicted classes, residual matrix)``."""
    res = crc_residuals(dic, Y, normalized_residual)
    if np.any(np.all(np.isinf(res), axis=1)):
        raise DegenerateDecisionError("all class coefficient groups are zero for some query")
    return np.argmin(res, axis=1), res


def _check_knn(n_train, k, metric):
    if k < 1 or k > n_train:
        raise ParameterError(f"k={k} must lie in [1, {n_train}]")
    if metric not in KNN_METRICS:
        raise ParameterError(f"unknown metric {metric!r}; choose from {KNN_METRICS}")


def knn_votes(train_X, train_y, Q, k: int = 5, metric: str = "euclidean",
              n_classes=None) -> np.ndarray:
    """Vote counts ``(N, c)`` among the ``k`` nearest training points."""
    train_X = np.asarray(train_X, dtype=np.float64)
    train_y = np.asarray(train_y)
    Q = np.atleast_2d(np.asarray(Q, dtype=np.float64))
    _check_knn(train_X.shape[0], k, metric)
    if n_classes is None:
        n_classes = int(train_y.max()) + 1
    dist = cdist(Q, train_X, metric=metric)
    # Stable sort keeps the lower training index first among equal distances.
    nearest = np.argsort(dist, axis=1, kind="stable")[:, :k]
    votes = np.zeros((Q.shape[0], n_classes))
    for j in range(k):
        np.add.at(votes, (np.arange(Q.shape[0]), train_y[nearest[:, j]]), 1.0)
    return votes


def knn_classify(train_X, train_y, y, k: int = 5, metric: str = "euclidean",
                 n_classes=None) -> ClassDecision:
    votes = knn_votes(train_X, train_y, np.asarray(y)[None, :], k, metric, n_classes)[0]
    return decide(votes, lower_is_better=False)
