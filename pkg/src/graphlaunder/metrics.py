"""Binary classification metrics for heavily imbalanced labels.

Conventions:

* a sample is predicted illicit when ``score >= threshold``;
* AUPR is the step sum ``sum_k (R_k - R_{k-1}) P_k`` over the distinct
  score thresholds in descending order, with no interpolation (a constant
  scorer gets exactly the positive prevalence);
* AUC is the Mann-Whitney statistic ``(2 * #{pos > neg} + #{ties}) / (2 P N)``
  from integer counts;
* MCC is 0 when any confusion margin is empty.
"""

from __future__ import annotations

import math
import warnings
from fractions import Fraction
from dataclasses import asdict, dataclass, field

import numpy as np

from .errors import EmptyEvaluation, SingleClassLabels


@dataclass
class Confusion:
    tp: int
    fp: int
    fn: int
    tn: int

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.fn + self.tn


def confusion_at(scores, labels, threshold: float) -> Confusion:
    s = np.asarray(scores, dtype=np.float64)
    y = np.asarray(labels).astype(bool)
    pred = s >= threshold
    tp = int(np.count_nonzero(pred & y))
    fp = int(np.count_nonzero(pred & ~y))
    fn = int(np.count_nonzero(~pred & y))
    return Confusion(tp, fp, fn, len(s) - tp - fp - fn)


def f1_from(c: Confusion) -> float:
    denom = 2 * c.tp + c.fp + c.fn
    return 0.0 if denom == 0 else 2 * c.tp / denom


def mcc_from(c: Confusion) -> float:
    denom = (c.tp + c.fp) * (c.tp + c.fn) * (c.tn + c.fp) * (c.tn + c.fn)
    if denom == 0:
        return 0.0
    return (c.tp * c.tn - c.fp * c.fn) / math.sqrt(denom)


def accuracy_from(c: Confusion) -> float:
    # micro-averaged F1 over both classes equals accuracy for single-label binary data
    return (c.tp + c.tn) / c.total if c.total else 0.0


def _threshold_counts(s: np.ndarray, y: np.ndarray):
    """Distinct thresholds (descending) with cumulative TP/FP counts at ``score >= t``."""
    order = np.argsort(-s, kind="stable")
    s_sorted, y_sorted = s[order], y[order]
    tp = np.cumsum(y_sorted)
    fp = np.cumsum(~y_sorted)
    last = np.r_[np.flatnonzero(s_sorted[1:] != s_sorted[:-1]), len(s) - 1]
    return s_sorted[last], tp[last].astype(np.int64), fp[last].astype(np.int64)


def _pairwise_sum(terms: list[Fraction]) -> Fraction:
    # balanced reduction keeps the big-integer operands small
    while len(terms) > 1:
        paired = [terms[i] + terms[i + 1] for i in range(0, len(terms) - 1, 2)]
        if len(terms) % 2:
            paired.append(terms[-1])
        terms = paired
    return terms[0] if terms else Fraction(0)


def aupr_score(scores, labels) -> float:
    """Step-sum AUPR, accumulated in exact rationals and rounded once."""
    s = np.asarray(scores, dtype=np.float64)
    y = np.asarray(labels).astype(bool)
    pos = int(y.sum())
    if pos == 0 or pos == len(y):
        return float("nan")
    _, tp, fp = _threshold_counts(s, y)
    # sum_k (t_k - t_{k-1}) * t_k / (t_k + f_k), grouped by denominator
    by_denom: dict[int, int] = {}
    prev_tp = 0
    for t, f in zip(tp.tolist(), fp.tolist()):
        if t != prev_tp:
            by_denom[t + f] = by_denom.get(t + f, 0) + (t - prev_tp) * t
        prev_tp = t
    total = _pairwise_sum([Fraction(v, k) for k, v in sorted(by_denom.items())])
    return float(total / pos)


def auc_score(scores, labels) -> float:
    s = np.asarray(scores, dtype=np.float64)
    y = np.asarray(labels).astype(bool)
    P = int(y.sum())
    N = len(y) - P
    if P == 0 or N == 0:
        return float("nan")
    # for each positive, count negatives strictly below and tied
    neg = np.sort(s[~y])
    below = np.searchsorted(neg, s[y], side="left")
    upto = np.searchsorted(neg, s[y], side="right")
    greater = int(below.sum())
    ties = int((upto - below).sum())
    return (2 * greater + ties) / (2 * P * N)


def pr_curve(scores, labels):
    """``(recall, precision)`` per distinct threshold, recall non-decreasing."""
    s = np.asarray(scores, dtype=np.float64)
    y = np.asarray(labels).astype(bool)
    pos = max(int(y.sum()), 1)
    thr, tp, fp = _threshold_counts(s, y)
    return [(t / pos, t / (t + f), float(h)) for t, f, h in zip(tp.tolist(), fp.tolist(), thr.tolist())]


def roc_curve(scores, labels):
    """``(fpr, tpr)`` from ``(0, 0)`` through every distinct threshold to ``(1, 1)``."""
    s = np.asarray(scores, dtype=np.float64)
    y = np.asarray(labels).astype(bool)
    P, N = max(int(y.sum()), 1), max(int((~y).sum()), 1)
    thr, tp, fp = _threshold_counts(s, y)
    return [(0.0, 0.0, float("inf"))] + [(f / N, t / P, float(h)) for t, f, h in zip(tp.tolist(), fp.tolist(), thr.tolist())]


def prevalence_threshold(scores, labels) -> float:
    """Score of the ``ceil(prevalence * n)``-th highest sample; flags at least that many."""
    s = np.sort(np.asarray(scores, dtype=np.float64))[::-1]
    y = np.asarray(labels).astype(bool)
    k = max(1, math.ceil(y.mean() * len(y))) if len(y) else 1
    return float(s[min(k, len(s)) - 1])


@dataclass
class MetricsReport:
    n: int
    positives: int
    prevalence: float
    aupr: float | None
    auc_roc: float | None
    f1_micro: float
    f1_minority: float
    mcc: float
    confusion: Confusion
    threshold: float
    prevalence_threshold: float
    recall_at_prevalence: float
    f1_minority_at_prevalence: float
    mcc_at_prevalence: float
    confusion_at_prevalence: Confusion
    pr_curve: list = field(default_factory=list, repr=False)
    roc_curve: list = field(default_factory=list, repr=False)

    @property
    def undefined(self) -> list[str]:
        return [k for k in ("aupr", "auc_roc") if getattr(self, k) is None]

    def summary(self) -> dict:
        d = asdict(self)
        d.pop("pr_curve")
        d.pop("roc_curve")
        return d

    def to_dict(self) -> dict:
        return asdict(self)


def compute_metrics(scores, labels, threshold: float = 0.5) -> MetricsReport:
    """All metrics for illicit-class scores against 0/1 labels."""
    s = np.asarray(scores, dtype=np.float64).reshape(-1)
    y = np.asarray(labels).astype(np.int64).reshape(-1)
    if len(s) != len(y):
        raise ValueError("scores and labels differ in length")
    if len(s) == 0:
        raise EmptyEvaluation("no samples to evaluate")
    if set(np.unique(y).tolist()) - {0, 1}:
        raise ValueError("labels must be 0/1")
    yb = y.astype(bool)
    single = yb.all() or not yb.any()
    if single:
        warnings.warn(SingleClassLabels("only one class present; AUPR and AUC are undefined"), stacklevel=2)
    c = confusion_at(s, yb, threshold)
    pt = prevalence_threshold(s, yb)
    cq = confusion_at(s, yb, pt)
    pos = int(yb.sum())
    return MetricsReport(
        n=len(s), positives=pos, prevalence=pos / len(s),
        aupr=None if single else aupr_score(s, yb),
        auc_roc=None if single else auc_score(s, yb),
        f1_micro=accuracy_from(c), f1_minority=f1_from(c), mcc=mcc_from(c), confusion=c,
        threshold=float(threshold), prevalence_threshold=pt,
        recall_at_prevalence=cq.tp / pos if pos else 0.0,
        f1_minority_at_prevalence=f1_from(cq), mcc_at_prevalence=mcc_from(cq), confusion_at_prevalence=cq,
        pr_curve=pr_curve(s, yb), roc_curve=roc_curve(s, yb),
    )


SCALAR_FIELDS = ("aupr", "auc_roc", "f1_micro", "f1_minority", "mcc", "recall_at_prevalence",
                 "f1_minority_at_prevalence", "mcc_at_prevalence", "prevalence")


def aggregate_reports(reports: list[MetricsReport]) -> tuple[dict, dict]:
    """Mean and population standard deviation of each scalar metric, skipping undefined values."""
    mean, std = {}, {}
    for k in SCALAR_FIELDS:
        vals = [getattr(r, k) for r in reports if getattr(r, k) is not None]
        mean[k] = float(np.mean(vals)) if vals else None
        std[k] = float(np.std(vals)) if vals else None
    return mean, std


def write_curves(prefix, report: MetricsReport) -> list[str]:
    """``<prefix>_pr.csv`` and ``<prefix>_roc.csv``; returns the paths."""
    paths = []
    for name, header, pts in (("pr", "recall,precision,threshold", report.pr_curve),
                              ("roc", "fpr,tpr,threshold", report.roc_curve)):
        path = f"{prefix}_{name}.csv"
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(header + "\n")
            for a, b, t in pts:
                fh.write(f"{a!r},{b!r},{t!r}\n")
        paths.append(path)
    return paths
