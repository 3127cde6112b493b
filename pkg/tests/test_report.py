import json

import numpy as np
import pytest

from csen.config import ExperimentConfig
from csen.data import generate_synthetic
from csen.errors import DataError
from csen.evaluation import ConfusionMatrix, EvaluationReport, compute_metrics, run_experiment
from csen.pipeline import (
    REPORT_FORMATS,
    read_report_csv,
    render_report,
    report_to_dict,
    reports_equal,
    write_report,
)

NAMES = ("bacterial", "viral", "normal", "covid")
CSEN2 = np.array([[1818, 636, 180, 126], [338, 959, 127, 61],
                  [15, 71, 1428, 65], [0, 3, 4, 455]])


def make_report(counts, names):
    cm = ConfusionMatrix(np.asarray(counts), names)
    m = compute_metrics(cm)
    return EvaluationReport("csen2", names, (cm,), cm, m, m, {"seed": 0})


@pytest.fixture(scope="module")
def real_report():
    ds = generate_synthetic(3, 20, 8, 5.0, seed=3)
    return run_experiment(ds, ExperimentConfig(method="knn"))


def test_identity_report_is_perfect():
    d = report_to_dict(make_report(np.diag([4, 5]), ("a", "b")))
    assert d["metrics"]["overall_accuracy"] == 1.0
    assert all(r["sensitivity"] == 1.0 for r in d["metrics"]["per_class"])


def test_text_report_shows_three_decimal_metrics():
    text = render_report(make_report(CSEN2, NAMES), "text", timestamp="T")
    for value in ("0.659", "0.646", "0.904", "0.985", "0.957"):
        assert value in text
    assert text.splitlines()[0] == "# generated T"


@pytest.mark.parametrize("fmt", REPORT_FORMATS)
def test_timestamp_only_on_first_line(real_report, fmt):
    a = render_report(real_report, fmt, timestamp="2000-01-01T00:00:00Z")
    b = render_report(real_report, fmt, timestamp="2099-12-31T23:59:59Z")
    assert a.splitlines()[0] != b.splitlines()[0]
    assert a.splitlines()[1:] == b.splitlines()[1:]
    assert "2000-01-01" not in "\n".join(a.splitlines()[1:])


def test_json_report_parses(real_report):
    d = json.loads(render_report(real_report, "json", timestamp="T"))
    assert d["generated"] == "T"
    assert d["method"] == "knn"
    assert np.array_equal(d["confusion"], real_report.cumulative.counts)


def test_csv_report_round_trip(tmp_path, real_report):
    write_report(real_report, tmp_path / "r.csv", "csv")
    back = read_report_csv(tmp_path / "r.csv")
    assert reports_equal(back, real_report)


def test_reports_equal_detects_change(real_report):
    other = make_report(real_report.cumulative.counts, real_report.class_names)
    assert not reports_equal(other, real_report)


def test_write_errors(tmp_path, real_report):
    with pytest.raises(DataError, match="cannot write"):
        write_report(real_report, tmp_path / "missing" / "r.txt")
    with pytest.raises(DataError, match="format"):
        render_report(real_report, "xml")
