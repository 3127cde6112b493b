"""Rendering evaluation reports as text tables, CSV or JSON.

Every format carries the generation timestamp on its first line and nowhere
else, so two runs with the same seed differ only there.
"""

from __future__ import annotations

import csv
import io
import json
from datetime import datetime, timezone

import numpy as np

from ..errors import DataError, ParseError
from ..evaluation import ConfusionMatrix, EvaluationReport, MetricsReport

REPORT_FORMATS = ("text", "csv", "json")


def _stamp() -> str:
    return datetime.now(timezone.utc).strftime("%Y-%m-%dT%H:%M:%SZ")


def _metric_rows(m: MetricsReport):
    for i, name in enumerate(m.class_names):
        yield name, m.accuracy[i], m.sensitivity[i], m.specificity[i]


def render_text(report: EvaluationReport, timestamp=None) -> str:
    names = report.class_names
    w = max(12, max(len(n) for n in names) + 2)
    out = [f"# generated {timestamp or _stamp()}",
           f"method: {report.method}", "",
           "cumulative confusion matrix (rows = actual, cols = predicted)",
           " " * w + "".join(f"{n:>{w}}" for n in names)]
    for name, row in zip(names, report.cumulative.counts):
        out.append(f"{name:<{w}}" + "".join(f"{int(v):>{w}}" for v in row))

    def table(title, m):
        out.extend(["", title,
                    f"{'class':<{w}}{'accuracy':>12}{'sensitivity':>12}{'specificity':>12}"])
        for name, a, s, p in _metric_rows(m):
            out.append(f"{name:<{w}}{a:>12.3f}{s:>12.3f}{p:>12.3f}")
        out.append(f"{'overall':<{w}}{m.overall_accuracy:>12.3f}")

    table("metrics on the cumulative confusion matrix", report.metrics)
    table(f"mean of per-fold metrics ({len(report.fold_matrices)} folds)",
          report.fold_mean_metrics)
    out.extend(["", "per-fold confusion matrices"])
    for f, cm in enumerate(report.fold_matrices):
        out.append(f"fold {f}: " + "; ".join(" ".join(str(int(v)) for v in row)
                                            for row in cm.counts))
    out.extend(["", "settings"])
    for k in sorted(report.settings):
        out.append(f"  {k} = {json.dumps(report.settings[k])}")
    return "\n".join(out) + "\n"


def render_csv(report: EvaluationReport, timestamp=None) -> str:
    buf = io.StringIO()
    buf.write(f"# generated {timestamp or _stamp()}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["method", report.method])
    w.writerow(["classes", *report.class_names])
    for name, row in zip(report.class_names, report.cumulative.counts):
        w.writerow(["confusion", name, *(int(v) for v in row)])
    for f, cm in enumerate(report.fold_matrices):
        for name, row in zip(report.class_names, cm.counts):
            w.writerow(["fold_confusion", f, name, *(int(v) for v in row)])
    for tag, m in (("metric", report.metrics), ("fold_mean_metric", report.fold_mean_metrics)):
        w.writerow([f"{tag}_header", "class", "accuracy", "sensitivity", "specificity"])
        for name, a, s, p in _metric_rows(m):
            w.writerow([tag, name, repr(float(a)), repr(float(s)), repr(float(p))])
        w.writerow([f"{tag}_overall", repr(float(m.overall_accuracy))])
    for k in sorted(report.settings):
        w.writerow(["setting", k, json.dumps(report.settings[k])])
    return buf.getvalue()


def report_to_dict(report: EvaluationReport) -> dict:
    def metrics(m):
        return {"overall_accuracy": m.overall_accuracy,
                "per_class": [{"class": n, "accuracy": float(a), "sensitivity": float(s),
                               "specificity": float(p)} for n, a, s, p in _metric_rows(m)]}
    return {
        "method": report.method,
        "class_names": list(report.class_names),
        "confusion": report.cumulative.counts.tolist(),
        "fold_confusion": [cm.counts.tolist() for cm in report.fold_matrices],
        "metrics": metrics(report.metrics),
        "fold_mean_metrics": metrics(report.fold_mean_metrics),
        "settings": report.settings,
    }


def render_json(report: EvaluationReport, timestamp=None) -> str:
    body = json.dumps(report_to_dict(report), indent=2, sort_keys=True)
    return json.dumps({"generated": timestamp or _stamp()})[:-1] + ",\n" + body[2:] + "\n"


def render_report(report: EvaluationReport, format: str = "text", timestamp=None) -> str:
    try:
        fn = {"text": render_text, "csv": render_csv, "json": render_json}[format]
    except KeyError:
        raise DataError(f"unknown report format {format!r}; choose from {REPORT_FORMATS}") from None
    return fn(report, timestamp)


def write_report(report: EvaluationReport, path, format: str = "text") -> None:
    text = render_report(report, format)
    try:
        with open(path, "w") as fh:
            fh.write(text)
    except OSError as exc:
        raise DataError(f"cannot write report to {path}: {exc}") from None


def read_report_csv(path) -> EvaluationReport:
    """Parse a CSV report back into an :class:`EvaluationReport`."""
    with open(path, newline="") as fh:
        lines = [ln for ln in fh.read().splitlines() if not ln.startswith("#")]
    method, names = None, None
    cum, folds, settings = [], {}, {}
    mets = {"metric": [], "fold_mean_metric": []}
    overall = {}
    for lineno, rec in enumerate(csv.reader(lines), start=2):
        if not rec:
            continue
        tag = rec[0]
        try:
            if tag == "method":
                method = rec[1]
            elif tag == "classes":
                names = tuple(rec[1:])
            elif tag == "confusion":
                cum.append([int(v) for v in rec[2:]])
            elif tag == "fold_confusion":
                folds.setdefault(int(rec[1]), []).append([int(v) for v in rec[3:]])
            elif tag in mets:
                mets[tag].append([float(v) for v in rec[2:5]])
            elif tag.endswith("_overall"):
                overall[tag[:-len("_overall")]] = float(rec[1])
            elif tag == "setting":
                settings[rec[1]] = json.loads(rec[2])
            elif tag.endswith("_header"):
                continue
            else:
                raise ParseError(f"{path}:{lineno}: unknown row tag {tag!r}")
        except (ValueError, IndexError) as exc:
            raise ParseError(f"{path}:{lineno}: {exc}") from None
    if method is None or names is None or not cum:
        raise ParseError(f"{path}: incomplete report")

    def metrics(tag):
        a = np.array(mets[tag])
        return MetricsReport(names, a[:, 0], a[:, 1], a[:, 2], overall[tag])

    fold_cms = tuple(ConfusionMatrix(np.array(folds[f]), names) for f in sorted(folds))
    return EvaluationReport(method, names, fold_cms, ConfusionMatrix(np.array(cum), names),
                            metrics("metric"), metrics("fold_mean_metric"), settings)


def reports_equal(a: EvaluationReport, b: EvaluationReport) -> bool:
    def same_metrics(x, y):
        return (x.class_names == y.class_names and x.overall_accuracy == y.overall_accuracy
                and all(np.array_equal(getattr(x, f), getattr(y, f))
                        for f in ("accuracy", "sensitivity", "specificity")))
    return (a.method == b.method and a.class_names == b.class_names
            and np.array_equal(a.cumulative.counts, b.cumulative.counts)
            and len(a.fold_matrices) == len(b.fold_matrices)
            and all(np.array_equal(x.counts, y.counts)
                    for x, y in zip(a.fold_matrices, b.fold_matrices))
            and same_metrics(a.metrics, b.metrics)
            and same_metrics(a.fold_mean_metrics, b.fold_mean_metrics)
            and a.settings == b.settings)
