"""Confusion counts, the derived metrics, and ROC/AUC.

The positive class is always malignant (label 1).  Metrics with a zero
denominator return ``None`` — an explicit "undefined" — and serializers
render it as ``N/A``; nothing here silently substitutes 0 or NaN.

The ROC sweep uses the prediction rule ``score >= threshold`` (the same
tie rule as the fusion decision), walking thresholds from +infinity down
through every distinct score.  AUC is the trapezoidal area under the
resulting curve, which equals the Mann-Whitney pair statistic with ties
counted one half.
"""

import math
from dataclasses import dataclass

import numpy as np

__all__ = [
    "MetricsError",
    "ConfusionCounts",
    "MetricsReport",
    "RocCurve",
    "confusion",
    "accuracy",
    "precision",
    "recall",
    "specificity",
    "f1_score",
    "metrics_report",
    "roc",
    "report_text",
    "report_csv_text",
    "roc_csv_text",
    "write_report_csv",
    "write_roc_csv",
]


class MetricsError(Exception):
    """Inputs that no metric is defined for."""


@dataclass(frozen=True)
class ConfusionCounts:
    tp: int
    fp: int
    tn: int
    fn: int

    def __post_init__(self):
        for name in ("tp", "fp", "tn", "fn"):
            value = getattr(self, name)
            if not isinstance(value, (int, np.integer)) or value < 0:
                raise MetricsError(f"{name} must be a non-negative integer, got {value!r}")

    @property
    def total(self):
        return self.tp + self.fp + self.tn + self.fn


@dataclass(frozen=True)
class MetricsReport:
    counts: ConfusionCounts
    accuracy: float
    precision: float
    recall: float
    specificity: float
    f1: float


@dataclass(frozen=True)
class RocCurve:
    thresholds: tuple  # leading +inf sentinel, then distinct scores descending
    points: tuple  # (fpr, tpr) per threshold, ends at (1,1)
    auc: float


def _check_binary(values, name):
    arr = np.asarray(values)
    bad = np.nonzero((arr != 0) & (arr != 1))[0]
    if bad.size:
        raise MetricsError(f"{name}[{bad[0]}] is {arr[bad[0]]!r}, expected 0 or 1")
    return arr.astype(np.int64)


def confusion(predictions, labels):
    """Count TP/FP/TN/FN with malignant (1) as the positive class."""
    predictions = _check_binary(predictions, "predictions")
    labels = _check_binary(labels, "labels")
    if predictions.shape != labels.shape or predictions.ndim != 1:
        raise MetricsError(
            f"predictions and labels must be equal-length 1-D, "
            f"got {predictions.shape} and {labels.shape}"
        )
    if predictions.size == 0:
        raise MetricsError("cannot build a confusion matrix from zero samples")
    tp = int(np.sum((predictions == 1) & (labels == 1)))
    fp = int(np.sum((predictions == 1) & (labels == 0)))
    tn = int(np.sum((predictions == 0) & (labels == 0)))
    fn = int(np.sum((predictions == 0) & (labels == 1)))
    return ConfusionCounts(tp=tp, fp=fp, tn=tn, fn=fn)


def accuracy(counts):
    """(TP+TN) / total."""
    if counts.total == 0:
        raise MetricsError("accuracy undefined for zero samples")
    return (counts.tp + counts.tn) / counts.total


def precision(counts):
    """TP / (TP+FP), or None when nothing was predicted positive."""
    denom = counts.tp + counts.fp
    return counts.tp / denom if denom else None


def recall(counts):
    """TP / (TP+FN), or None when no actual positives exist."""
    denom = counts.tp + counts.fn
    return counts.tp / denom if denom else None


def specificity(counts):
    """TN / (TN+FP), or None when no actual negatives exist."""
    denom = counts.tn + counts.fp
    return counts.tn / denom if denom else None


def f1_score(precision_value, recall_value):
    """Harmonic mean 2PR/(P+R); undefined inputs or P=R=0 stay undefined."""
    if precision_value is None or recall_value is None:
        return None
    if precision_value + recall_value == 0:
        return None
    return 2.0 * precision_value * recall_value / (precision_value + recall_value)


def metrics_report(counts):
    p = precision(counts)
    r = recall(counts)
    return MetricsReport(
        counts=counts,
        accuracy=accuracy(counts),
        precision=p,
        recall=r,
        specificity=specificity(counts),
        f1=f1_score(p, r),
    )


def roc(scores, labels):
    """ROC curve over thresholds +inf then each distinct score, descending."""
    scores = np.asarray(scores, dtype=np.float64)
    labels = _check_binary(labels, "labels")
    if scores.shape != labels.shape or scores.ndim != 1:
        raise MetricsError(
            f"scores and labels must be equal-length 1-D, got {scores.shape} and {labels.shape}"
        )
    if scores.size == 0:
        raise MetricsError("cannot build a ROC curve from zero samples")
    positives = int(labels.sum())
    negatives = int(labels.size - positives)
    if positives == 0 or negatives == 0:
        raise MetricsError("ROC needs both classes present; AUC is undefined otherwise")

    order = np.argsort(-scores, kind="stable")
    sorted_scores = scores[order]
    sorted_labels = labels[order]
    cum_tp = np.cumsum(sorted_labels)
    # last index of every run of equal scores = state after that threshold
    boundary = np.nonzero(np.diff(sorted_scores))[0]
    last = np.concatenate([boundary, [scores.size - 1]])

    thresholds = [math.inf]
    fprs = [0.0]
    tprs = [0.0]
    for i in last:
        thresholds.append(float(sorted_scores[i]))
        tp = int(cum_tp[i])
        fp = int(i + 1 - tp)
        fprs.append(fp / negatives)
        tprs.append(tp / positives)

    auc = 0.0
    for i in range(1, len(fprs)):
        auc += (fprs[i] - fprs[i - 1]) * (tprs[i] + tprs[i - 1]) / 2.0
    return RocCurve(
        thresholds=tuple(thresholds),
        points=tuple(zip(fprs, tprs)),
        auc=auc,
    )


def _render(value):
    return "N/A" if value is None else repr(float(value))


def report_text(report):
    """Human-readable metrics block."""
    c = report.counts
    lines = [
        f"samples      {c.total}",
        f"TP {c.tp}  FP {c.fp}  TN {c.tn}  FN {c.fn}",
        f"accuracy     {_render(report.accuracy)}",
        f"precision    {_render(report.precision)}",
        f"recall       {_render(report.recall)}",
        f"specificity  {_render(report.specificity)}",
        f"f1           {_render(report.f1)}",
    ]
    return "\n".join(lines) + "\n"


def report_csv_text(report, auc=None):
    c = report.counts
    rows = [
        ("metric", "value"),
        ("tp", str(c.tp)),
        ("fp", str(c.fp)),
        ("tn", str(c.tn)),
        ("fn", str(c.fn)),
        ("accuracy", _render(report.accuracy)),
        ("precision", _render(report.precision)),
        ("recall", _render(report.recall)),
        ("specificity", _render(report.specificity)),
        ("f1", _render(report.f1)),
    ]
    if auc is not None:
        rows.append(("auc", repr(float(auc))))
    return "".join(f"{k},{v}\n" for k, v in rows)


def roc_csv_text(curve):
    lines = ["threshold,fpr,tpr"]
    for t, (fpr, tpr) in zip(curve.thresholds, curve.points):
        lines.append(f"{repr(float(t))},{repr(float(fpr))},{repr(float(tpr))}")
    return "\n".join(lines) + "\n"


def write_report_csv(path, report, auc=None):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        fh.write(report_csv_text(report, auc=auc))


def write_roc_csv(path, curve):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        fh.write(roc_csv_text(curve))
