import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from csen.config import ExperimentConfig
from csen.data import FeatureDataset, generate_synthetic
from csen.errors import DataError, ParameterError, TrainingError
from csen.evaluation import (
    ConfusionMatrix,
    balance_training_set,
    benchmark_inference,
    compute_metrics,
    fit_method,
    run_experiment,
    stratified_kfold,
)
from csen.sparse import crc_predict

CLASS_COUNTS = (2760, 1485, 1579, 462)
FOLD_TRAIN = (2208, 1188, 1263, 370)
FOLD_TEST = (552, 297, 316, 92)
NAMES = ("bacterial", "viral", "normal", "covid")

# Confusion counts of a 4-class CSEN2 result and the per-class metrics
# rounded to three decimals that go with it.
CSEN2_MATRIX = np.array([[1818, 636, 180, 126],
                         [338, 959, 127, 61],
                         [15, 71, 1428, 65],
                         [0, 3, 4, 455]])
CSEN2_SENSITIVITY = (0.659, 0.646, 0.904, 0.985)
CSEN2_SPECIFICITY = (0.900, 0.852, 0.934, 0.957)
CSEN2_ACCURACY = (0.794, 0.803, 0.927, 0.959)


def full_labels():
    return np.repeat(np.arange(4), CLASS_COUNTS)


# -- folds -------------------------------------------------------------------

def test_folds_partition_the_samples():
    labels = full_labels()
    plan = stratified_kfold(labels, 5, seed=0)
    allt = np.concatenate(plan.test)
    assert np.array_equal(np.sort(allt), np.arange(labels.size))
    for tr, te in zip(plan.train, plan.test):
        assert np.intersect1d(tr, te).size == 0
        assert tr.size + te.size == labels.size


def test_fold_counts_match_reference_split():
    labels = full_labels()
    plan = stratified_kfold(labels, 5, seed=0)
    for tr, te in zip(plan.train, plan.test):
        assert np.all(np.abs(np.bincount(labels[tr], minlength=4) - FOLD_TRAIN) <= 1)
        assert np.all(np.abs(np.bincount(labels[te], minlength=4) - FOLD_TEST) <= 1)


def test_fold_remainders_spread_across_folds():
    labels = full_labels()
    plan = stratified_kfold(labels, 5, seed=0)
    covid = [int(np.sum(labels[te] == 3)) for te in plan.test]
    assert covid == [93, 92, 92, 92, 93]
    sizes = [te.size for te in plan.test]
    assert max(sizes) - min(sizes) <= 1


def test_folds_deterministic_and_seeded():
    labels = full_labels()
    a = stratified_kfold(labels, 5, seed=3)
    b = stratified_kfold(labels, 5, seed=3)
    c = stratified_kfold(labels, 5, seed=4)
    assert all(np.array_equal(x, y) for x, y in zip(a.test, b.test))
    assert not all(np.array_equal(x, y) for x, y in zip(a.test, c.test))


def test_fold_errors():
    with pytest.raises(ParameterError):
        stratified_kfold([0, 1, 0, 1], 1)
    with pytest.raises(DataError, match="fewer than k"):
        stratified_kfold([0, 0, 0, 1, 1], 3)


@settings(max_examples=30, deadline=None)
@given(st.lists(st.integers(2, 20), min_size=2, max_size=5), st.integers(2, 4),
       st.integers(0, 1000))
def test_property_folds_stratified(counts, k, seed):
    counts = [max(c, k) for c in counts]
    labels = np.repeat(np.arange(len(counts)), counts)
    plan = stratified_kfold(labels, k, seed)
    for te in plan.test:
        per = np.bincount(labels[te], minlength=len(counts))
        assert np.all(np.abs(per * k - np.asarray(counts)) < k)


# -- balancing ---------------------------------------------------------------

def full_fold_train(seed=0, dim=3):
    labels = np.repeat(np.arange(4), FOLD_TRAIN)
    X = np.random.default_rng(seed).standard_normal((labels.size, dim))
    return FeatureDataset(X, labels, NAMES)


def test_balancing_reaches_majority_count():
    bal = balance_training_set(full_fold_train(), seed=1)
    assert tuple(bal.class_counts()) == (2208,) * 4
    assert bal.n_samples == 8832


def test_balancing_keeps_originals_and_tracks_source():
    train = full_fold_train()
    bal = balance_training_set(train, seed=2)
    n = train.n_samples
    assert np.array_equal(bal.features[:n], train.features)
    assert np.array_equal(bal.source_index[:n], np.arange(n))
    src = bal.source_index[n:]
    assert np.array_equal(train.labels[src], bal.labels[n:])
    assert not np.array_equal(bal.features[n:], train.features[src])


def test_balancing_without_jitter_duplicates_exactly():
    train = full_fold_train()
    bal = balance_training_set(train, seed=3, jitter_sigma=0.0)
    assert np.array_equal(bal.features, train.features[bal.source_index])


def test_balancing_balanced_input_is_unchanged():
    ds = generate_synthetic(3, 5, 4, 1.0, seed=0)
    bal = balance_training_set(ds, seed=0)
    assert np.array_equal(bal.features, ds.features)
    with pytest.raises(ParameterError):
        balance_training_set(ds, jitter_sigma=-1.0)


# -- metrics -----------------------------------------------------------------

def test_metrics_reproduce_reference_csen2_row():
    m = compute_metrics(ConfusionMatrix(CSEN2_MATRIX, NAMES))
    np.testing.assert_allclose(m.sensitivity, CSEN2_SENSITIVITY, atol=5e-4)
    np.testing.assert_allclose(m.specificity, CSEN2_SPECIFICITY, atol=5e-4)
    np.testing.assert_allclose(m.accuracy, CSEN2_ACCURACY, atol=5e-4)


def test_metrics_identity_and_empty():
    m = compute_metrics(ConfusionMatrix(np.diag([3, 4, 5]), ("a", "b", "c")))
    assert np.all(m.sensitivity == 1) and np.all(m.specificity == 1)
    assert np.all(m.accuracy == 1) and m.overall_accuracy == 1
    with pytest.raises(DataError):
        compute_metrics(ConfusionMatrix(np.zeros((2, 2), dtype=int), ("a", "b")))


def test_metrics_class_without_positives():
    m = compute_metrics(ConfusionMatrix(np.array([[5, 0], [0, 0]]), ("a", "b")))
    assert m.sensitivity[1] == 0.0
    assert m.specificity[1] == 1.0


@settings(max_examples=50, deadline=None)
@given(st.lists(st.integers(0, 50), min_size=9, max_size=9))
def test_property_sensitivity_times_row_is_integral(cells):
    C = np.array(cells).reshape(3, 3)
    if C.sum() == 0:
        return
    m = compute_metrics(ConfusionMatrix(C, ("a", "b", "c")))
    rows = C.sum(axis=1)
    tp = m.sensitivity * rows
    np.testing.assert_allclose(tp, np.round(tp), atol=1e-9)
    np.testing.assert_allclose(tp[rows > 0], np.diag(C)[rows > 0])
    assert np.all((0 <= m.accuracy) & (m.accuracy <= 1))


def test_confusion_from_predictions_and_sum():
    cm = ConfusionMatrix.from_predictions([0, 1, 1, 2], [0, 2, 1, 2], ("a", "b", "c"))
    assert cm.counts.tolist() == [[1, 0, 0], [0, 1, 1], [0, 0, 1]]
    assert (cm + cm).total == 8


# -- experiments -------------------------------------------------------------

@pytest.fixture(scope="module")
def easy():
    return generate_synthetic(3, 40, 16, 6.0, seed=11)


def test_crc_experiment_matches_direct_classifier(easy):
    cfg = ExperimentConfig(method="crc", seed=5)
    report, folds = run_experiment(easy, cfg, keep_folds=True)
    plan = stratified_kfold(easy.labels, cfg.k_folds, cfg.seed)
    for r in folds:
        test = easy.subset(plan.test[r.fold])
        pred, _ = crc_predict(r.fitted.dictionary, r.fitted.queries(test.features))
        assert np.array_equal(pred, r.predictions)
        np.testing.assert_array_equal(
            ConfusionMatrix.from_predictions(test.labels, pred, easy.class_names).counts,
            report.fold_matrices[r.fold].counts)


def test_cumulative_rows_sum_to_class_counts(easy):
    report = run_experiment(easy, ExperimentConfig(method="knn"))
    assert np.array_equal(report.cumulative.counts.sum(axis=1), easy.class_counts())
    assert len(report.fold_matrices) == 5
    assert sum(m.total for m in report.fold_matrices) == easy.n_samples


def test_fit_reads_only_training_rows(easy):
    plan = stratified_kfold(easy.labels, 5, 0)
    cfg = ExperimentConfig(method="crc")
    a = fit_method(easy.subset(plan.train[0]), cfg)
    poisoned = easy.features.copy()
    poisoned[plan.test[0]] = 1e6
    b = fit_method(easy.with_features(poisoned).subset(plan.train[0]), cfg)
    assert np.array_equal(a.dictionary.D, b.dictionary.D)
    assert np.array_equal(a.standardizer.mean, b.standardizer.mean)


def test_threads_do_not_change_results(easy):
    cfg = ExperimentConfig(method="crc", seed=2)
    a = run_experiment(easy, cfg, threads=1)
    b = run_experiment(easy, cfg, threads=3)
    assert all(np.array_equal(x.counts, y.counts)
               for x, y in zip(a.fold_matrices, b.fold_matrices))


def test_unknown_method_rejected(easy):
    with pytest.raises(ParameterError):
        fit_method(easy, ExperimentConfig(method="svm"))


def test_fold_errors_name_the_fold(easy):
    cfg = ExperimentConfig(method="csen1", atoms_per_class=4000)
    with pytest.raises(DataError, match="fold 0"):
        run_experiment(easy, cfg)


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_training_error_keeps_epoch_through_fold_context(easy):
    cfg = ExperimentConfig(method="csen1", atoms_per_class=4, csen_lr=1e30, csen_epochs=3)
    with pytest.raises(TrainingError, match="fold 0") as info:
        run_experiment(easy, cfg)
    assert info.value.epoch is not None


# -- timing ------------------------------------------------------------------

def test_benchmark_empty_test_set(easy):
    res = benchmark_inference(easy, np.empty((0, easy.dim)), ["crc", "knn"],
                              ExperimentConfig())
    assert [(r.method, r.seconds, r.samples) for r in res] == [("crc", 0.0, 0), ("knn", 0.0, 0)]


def test_benchmark_counts_samples(easy):
    res = benchmark_inference(easy, easy, ["knn"], ExperimentConfig())
    assert res[0].samples == easy.n_samples and res[0].seconds > 0
