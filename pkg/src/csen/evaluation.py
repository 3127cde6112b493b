"""Cross-validation, class balancing, metrics and the end-to-end pipeline."""

from __future__ import annotations

import logging
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

import numpy as np

from .config import ExperimentConfig
from .data import FeatureDataset
from .dictionary import Dictionary, build_dictionary, proxy
from .errors import CsenError, DataError, ParameterError
from .linalg import ProjectionMatrix, Standardizer, pca_apply, pca_fit, standardize_fit
from .network import (NetworkModel, TrainConfig, build_csen1, build_csen2, build_mlp,
                      build_reconnet_baseline, predict_scores)
from .network import train as train_network
from .sparse import crc_predict, knn_votes, src_classify

log = logging.getLogger(__name__)

METHODS = ("csen1", "csen2", "reconnet", "mlp", "crc", "src", "knn")
NETWORK_METHODS = ("csen1", "csen2", "reconnet")


# -- folds -------------------------------------------------------------------

@dataclass(frozen=True)
class FoldPlan:
    k: int
    train: tuple
    test: tuple
    seed: int


def stratified_kfold(labels, k: int, seed: int = 0) -> FoldPlan:
    """Shuffle each class (seeded) and deal its samples round-robin to folds.

    The dealing position carries over from one class to the next, so
    remainders of different classes land in different folds.
    """
    labels = np.asarray(labels)
    if k < 2:
        raise ParameterError(f"need k >= 2 folds, got {k}")
    rng = np.random.default_rng(seed)
    fold_of = np.empty(labels.shape[0], dtype=np.int64)
    offset = 0
    for cls in np.unique(labels):
        idx = np.flatnonzero(labels == cls)
        if idx.size < k:
            raise DataError(f"class {cls} has {idx.size} samples, fewer than k={k}")
        idx = rng.permutation(idx)
        fold_of[idx] = (offset + np.arange(idx.size)) % k
        offset = (offset + idx.size) % k
    test = tuple(np.flatnonzero(fold_of == f) for f in range(k))
    train = tuple(np.flatnonzero(fold_of != f) for f in range(k))
    return FoldPlan(k, train, test, seed)


def balance_training_set(train: FeatureDataset, seed=0,
                         jitter_sigma: float = 0.05) -> FeatureDataset:
    """Upsample every class to the majority count.

    Originals are kept verbatim; extra samples are seeded draws with
    replacement plus Gaussian jitter of ``jitter_sigma`` times the per-feature
    standard deviation of the training set. ``source_index`` of the result
    gives the originating row of ``train`` for every sample.
    """
    if jitter_sigma < 0:
        raise ParameterError(f"jitter_sigma must be >= 0, got {jitter_sigma}")
    rng = np.random.default_rng(seed)
    counts = train.class_counts()
    target = counts.max()
    scale = jitter_sigma * train.features.std(axis=0)
    feats, labels, source = [train.features], [train.labels], [np.arange(train.n_samples)]
    for cls, cnt in enumerate(counts):
        extra = target - cnt
        if extra == 0 or cnt == 0:
            continue
        pool = np.flatnonzero(train.labels == cls)
        pick = rng.choice(pool, size=extra, replace=True)
        noise = rng.standard_normal((extra, train.dim)) * scale if jitter_sigma > 0 else 0.0
        feats.append(train.features[pick] + noise)
        labels.append(np.full(extra, cls))
        source.append(pick)
    return FeatureDataset(np.vstack(feats), np.concatenate(labels), train.class_names,
                          provenance=train.provenance, source_index=np.concatenate(source))


# -- metrics -----------------------------------------------------------------

@dataclass(frozen=True)
class ConfusionMatrix:
    counts: np.ndarray
    class_names: tuple

    @classmethod
    def from_predictions(cls, actual, predicted, class_names) -> "ConfusionMatrix":
        c = len(class_names)
        cm = np.zeros((c, c), dtype=np.int64)
        np.add.at(cm, (np.asarray(actual), np.asarray(predicted)), 1)
        return cls(cm, tuple(class_names))

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    def __add__(self, other):
        return ConfusionMatrix(self.counts + other.counts, self.class_names)


@dataclass(frozen=True)
class MetricsReport:
    class_names: tuple
    accuracy: np.ndarray
    sensitivity: np.ndarray
    specificity: np.ndarray
    overall_accuracy: float


def compute_metrics(cm: ConfusionMatrix) -> MetricsReport:
    """One-vs-rest accuracy, sensitivity and specificity per class.

    A class with no positives (or no negatives) gets sensitivity (or
    specificity) 0.
    """
    C = np.asarray(cm.counts, dtype=np.float64)
    if C.size == 0 or C.sum() == 0:
        raise DataError("empty confusion matrix")
    total = C.sum()
    tp = np.diag(C)
    fn = C.sum(axis=1) - tp
    fp = C.sum(axis=0) - tp
    tn = total - tp - fn - fp
    with np.errstate(divide="ignore", invalid="ignore"):
        sens = np.where(tp + fn > 0, tp / (tp + fn), 0.0)
        spec = np.where(tn + fp > 0, tn / (tn + fp), 0.0)
    acc = (tp + tn) / total
    return MetricsReport(cm.class_names, acc, sens, spec, float(tp.sum() / total))


def mean_metrics(reports: Sequence[MetricsReport]) -> MetricsReport:
    return MetricsReport(
        reports[0].class_names,
        np.mean([r.accuracy for r in reports], axis=0),
        np.mean([r.sensitivity for r in reports], axis=0),
        np.mean([r.specificity for r in reports], axis=0),
        float(np.mean([r.overall_accuracy for r in reports])),
    )


@dataclass(frozen=True)
class EvaluationReport:
    method: str
    class_names: tuple
    fold_matrices: tuple
    cumulative: ConfusionMatrix
    metrics: MetricsReport
    fold_mean_metrics: MetricsReport
    settings: dict = field(default_factory=dict)

    @property
    def overall_accuracy(self) -> float:
        return self.metrics.overall_accuracy


# -- fitted pipeline ---------------------------------------------------------

@dataclass
class ModelArtifact:
    """Everything fitted on one training split for one method."""

    method: str
    class_names: tuple
    standardizer: Standardizer
    projection: ProjectionMatrix
    dictionary: Optional[Dictionary] = None
    network: Optional[NetworkModel] = None
    knn_X: Optional[np.ndarray] = None
    knn_y: Optional[np.ndarray] = None
    settings: dict = field(default_factory=dict)
    training_log: list = field(default_factory=list)

    def queries(self, features) -> np.ndarray:
        return pca_apply(self.projection, self.standardizer.apply(features))

    def network_input(self, features) -> np.ndarray:
        if self.method == "mlp":
            return self.standardizer.apply(features)
        planes = proxy(self.dictionary, self.queries(features),
                       self.settings.get("proxy_mode", "ridge")).plane
        return _scale_planes(planes) if self.settings.get("plane_scaling") else planes

    def predict(self, features):
        """Predicted class indices and per-class scores for raw features.

        Residual-based methods (crc, src) report residuals, lower is better;
        the others report scores where higher is better.
        """
        X = np.atleast_2d(np.asarray(features, dtype=np.float64))
        s = self.settings
        if self.method == "crc":
            return crc_predict(self.dictionary, self.queries(X),
                               s.get("crc_normalized_residual", True))
        if self.method == "src":
            Y = self.queries(X)
            scores = np.empty((Y.shape[0], self.dictionary.n_classes))
            for i, y in enumerate(Y):
                scores[i] = src_classify(
                    self.dictionary, y, s.get("src_lambda"), s.get("src_max_iter", 1000),
                    s.get("src_tol", 1e-8), s.get("src_normalized_residual", False),
                    s.get("src_lambda_factor", 0.3)).scores
            return np.argmin(scores, axis=1), scores
        if self.method == "knn":
            votes = knn_votes(self.knn_X, self.knn_y, self.queries(X), s.get("knn_k", 5),
                              s.get("knn_metric", "euclidean"), len(self.class_names))
            return np.argmax(votes, axis=1), votes
        scores = predict_scores(self.network, self.network_input(X)).astype(np.float64)
        return np.argmax(scores, axis=1), scores


def _scale_planes(planes):
    peak = np.abs(planes).reshape(planes.shape[0], -1).max(axis=1)
    peak[peak == 0] = 1.0
    return planes / peak[:, None, None]


def _seed(config: ExperimentConfig, *tags) -> np.random.SeedSequence:
    return np.random.SeedSequence([config.seed, *tags])


def _int_seed(config, *tags) -> int:
    return int(_seed(config, *tags).generate_state(1)[0])


def fit_method(train: FeatureDataset, config: ExperimentConfig, fold: int = 0) -> ModelArtifact:
    """Fit standardizer, PCA, balancing and the configured method on ``train``.

    Nothing outside ``train`` is read.
    """
    method = config.method
    if method not in METHODS:
        raise ParameterError(f"unknown method {method!r}; choose from {METHODS}")
    std = standardize_fit(train.features)
    Xs = std.apply(train.features)
    m = max(1, int(round(config.pca_cr * train.dim)))
    P = pca_fit(Xs, min(m, Xs.shape[0]))
    balanced = balance_training_set(train.with_features(Xs), _int_seed(config, fold, 1),
                                    config.jitter_sigma)
    fitted = ModelArtifact(method, train.class_names, std, P, settings=config.method_settings())

    if method in ("crc", "src"):
        n_per = int(balanced.class_counts().min())
        fitted.dictionary = build_dictionary(balanced, n_per, P, config.lam,
                                             _int_seed(config, fold, 2))
    elif method == "knn":
        fitted.knn_X = pca_apply(P, balanced.features)
        fitted.knn_y = balanced.labels.copy()
    elif method in NETWORK_METHODS:
        dic = build_dictionary(balanced, config.atoms_per_class, P, config.lam,
                               _int_seed(config, fold, 2))
        fitted.dictionary = dic
        rest = np.setdiff1d(np.arange(balanced.n_samples), dic.atom_source)
        if rest.size == 0:
            raise DataError("no training samples left after drawing dictionary atoms")
        builder = {"csen1": build_csen1, "csen2": build_csen2,
                   "reconnet": build_reconnet_baseline}[method]
        fitted.network = builder(dic.layout, seed=_int_seed(config, fold, 3))
        planes = proxy(dic, pca_apply(P, balanced.features[rest]), config.proxy_mode).plane
        if config.plane_scaling:
            planes = _scale_planes(planes)
        fitted.training_log = train_network(fitted.network, planes, balanced.labels[rest],
                                    config.train_config(method, _int_seed(config, fold, 4)))
    else:  # mlp
        fitted.network = build_mlp(train.dim, config.mlp_hidden, train.n_classes,
                                   seed=_int_seed(config, fold, 3))
        fitted.training_log = train_network(fitted.network, balanced.features, balanced.labels,
                                    config.train_config(method, _int_seed(config, fold, 4)))
    return fitted


@dataclass
class FoldResult:
    fold: int
    confusion: ConfusionMatrix
    predictions: np.ndarray
    fitted: ModelArtifact


def run_fold(dataset: FeatureDataset, train_idx, test_idx, config: ExperimentConfig,
             fold: int = 0) -> FoldResult:
    train_ds = dataset.subset(train_idx)
    test_ds = dataset.subset(test_idx)
    try:
        fitted = fit_method(train_ds, config, fold)
        pred, _ = fitted.predict(test_ds.features)
    except CsenError as exc:
        # Keep the exception type and attributes (e.g. the epoch of a
        # TrainingError); only prefix the message with the fold.
        exc.args = (f"fold {fold}: {exc}",) + exc.args[1:]
        raise
    cm = ConfusionMatrix.from_predictions(test_ds.labels, pred, dataset.class_names)
    return FoldResult(fold, cm, pred, fitted)


def run_experiment(dataset: FeatureDataset, config: ExperimentConfig,
                   threads: int = 1, keep_folds: bool = False):
    """Stratified k-fold evaluation of ``config.method``.

    Folds are independent (each derives its seeds from ``config.seed`` and
    its index), so ``threads > 1`` runs them concurrently without changing
    any result. With ``keep_folds`` the per-fold results are returned too.
    """
    plan = stratified_kfold(dataset.labels, config.k_folds, config.seed)

    def one(f):
        log.info("%s: fold %d/%d", config.method, f + 1, plan.k)
        return run_fold(dataset, plan.train[f], plan.test[f], config, f)

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(one, range(plan.k)))
    else:
        results = [one(f) for f in range(plan.k)]
    cumulative = results[0].confusion
    for r in results[1:]:
        cumulative = cumulative + r.confusion
    report = EvaluationReport(
        config.method, dataset.class_names, tuple(r.confusion for r in results), cumulative,
        compute_metrics(cumulative), mean_metrics([compute_metrics(r.confusion) for r in results]),
        settings=config.to_dict())
    return (report, results) if keep_folds else report


# -- timing ------------------------------------------------------------------

@dataclass(frozen=True)
class TimingResult:
    method: str
    seconds: float
    samples: int


def benchmark_inference(train: FeatureDataset, test, methods: Sequence[str],
                        config: ExperimentConfig, fitted: Optional[dict] = None,
                        warmup: int = 8) -> list:
    """Wall-clock time to classify ``test`` with each method.

    Fitting happens first and is not timed; each method then gets a short
    untimed warm-up call before the full test split is classified in one
    timed pass. ``test`` is a dataset or a (possibly empty) feature array.
    """
    X = test.features if isinstance(test, FeatureDataset) else np.asarray(test, dtype=np.float64)
    fitted = dict(fitted or {})
    out = []
    for method in methods:
        if method not in fitted:
            fitted[method] = fit_method(train, replace(config, method=method))
        pipe = fitted[method]
        if X.shape[0] == 0:
            out.append(TimingResult(method, 0.0, 0))
            continue
        pipe.predict(X[:warmup])
        t0 = time.perf_counter()
        pipe.predict(X)
        out.append(TimingResult(method, time.perf_counter() - t0, X.shape[0]))
    return out
