"""Accuracy and macro-F1 over a declared label space."""
from __future__ import annotations

import statistics
from dataclasses import dataclass, field

import numpy as np

from .errors import LengthMismatch, XRError


@dataclass(frozen=True)
class MetricsReport:
    accuracy: float
    macro_f1: float
    precision: tuple
    recall: tuple
    f1: tuple
    support: tuple


@dataclass(frozen=True)
class AggregateReport:
    n: int
    accuracy_mean: float
    accuracy_std: float
    macro_f1_mean: float
    macro_f1_std: float
    runs: tuple = field(default=(), repr=False)


def _check(preds, golds):
    p = np.asarray(preds, dtype=np.int64).ravel()
    g = np.asarray(golds, dtype=np.int64).ravel()
    if p.shape != g.shape:
        raise LengthMismatch(f"{p.size} predictions for {g.size} gold labels")
    if p.size == 0:
        raise XRError("no predictions to score")
    return p, g


def accuracy(preds, golds) -> float:
    p, g = _check(preds, golds)
    return float((p == g).mean())


def confusion_matrix(preds, golds, num_classes: int) -> np.ndarray:
    """cm[gold, pred] counts."""
    p, g = _check(preds, golds)
    cm = np.zeros((num_classes, num_classes), dtype=np.int64)
    np.add.at(cm, (g, p), 1)
    return cm


def macro_f1(preds, golds, num_classes: int) -> MetricsReport:
    # per-class zero conventions: P, R, F1 are 0 whenever their denominator is 0
    num_classes = getattr(num_classes, "size", num_classes)
    cm = confusion_matrix(preds, golds, num_classes)
    tp = np.diag(cm).astype(float)
    pred_tot = cm.sum(axis=0)
    gold_tot = cm.sum(axis=1)
    prec = np.divide(tp, pred_tot, out=np.zeros(num_classes), where=pred_tot > 0)
    rec = np.divide(tp, gold_tot, out=np.zeros(num_classes), where=gold_tot > 0)
    denom = prec + rec
    f1 = np.divide(2 * prec * rec, denom, out=np.zeros(num_classes), where=denom > 0)
    return MetricsReport(
        accuracy=float(tp.sum() / cm.sum()),
        macro_f1=float(f1.mean()),
        precision=tuple(prec.tolist()),
        recall=tuple(rec.tolist()),
        f1=tuple(f1.tolist()),
        support=tuple(int(x) for x in gold_tot),
    )


def score(metric: str, preds, golds, num_classes: int) -> float:
    if metric == "accuracy":
        return accuracy(preds, golds)
    if metric == "macro-f1":
        return macro_f1(preds, golds, num_classes).macro_f1
    raise XRError(f"unknown metric {metric!r}")


def aggregate(reports) -> AggregateReport:
    reports = list(reports)
    if not reports:
        raise XRError("nothing to aggregate")
    acc = [r.accuracy for r in reports]
    f1 = [r.macro_f1 for r in reports]
    std = (lambda xs: statistics.stdev(xs) if len(xs) > 1 else 0.0)
    return AggregateReport(len(reports), statistics.fmean(acc), std(acc),
                           statistics.fmean(f1), std(f1), tuple(reports))
