"""Segmentation metrics and the paired statistics used to compare runs."""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np

from . import CLASS_NAMES
from .io import TernaryLabelMap

METRIC_NAMES = ("accuracy", "f1", "precision", "recall", "jaccard", "specificity")
EXACT_WILCOXON_MAX_N = 12


class UndefinedStatistic(ValueError):
    """The statistic does not exist for the given data (e.g. constant input)."""


def _labels(x) -> np.ndarray:
    return x.labels if isinstance(x, TernaryLabelMap) else np.asarray(x)


@dataclass
class ConfusionCounts:
    """One-vs-rest pixel counts, arrays indexed by class (b, d, u)."""

    tp: np.ndarray
    fp: np.ndarray
    fn: np.ndarray
    tn: np.ndarray

    @property
    def total(self) -> int:
        return int(self.tp[0] + self.fp[0] + self.fn[0] + self.tn[0])

    def __add__(self, other: "ConfusionCounts") -> "ConfusionCounts":
        return ConfusionCounts(self.tp + other.tp, self.fp + other.fp,
                               self.fn + other.fn, self.tn + other.tn)


def confusion(pred, truth) -> ConfusionCounts:
    p, t = _labels(pred), _labels(truth)
    if p.shape != t.shape:
        raise ValueError(f"shape mismatch: {p.shape} vs {t.shape}")
    # 3x3 matrix, rows = truth, columns = prediction
    cm = np.bincount(t.astype(np.int64).ravel() * 3 + p.astype(np.int64).ravel(),
                     minlength=9).reshape(3, 3)
    tp = np.diag(cm).copy()
    fp = cm.sum(axis=0) - tp
    fn = cm.sum(axis=1) - tp
    tn = cm.sum() - tp - fp - fn
    return ConfusionCounts(tp, fp, fn, tn)


@dataclass
class MetricsReport:
    accuracy: float
    precision: list[float]
    recall: list[float]
    f1: list[float]
    specificity: list[float]
    jaccard: list[float]
    undefined: list[str] = field(default_factory=list)
    pixels: int = 0
    samples: int = 1
    mixed_pixel_rate: float | None = None

    @property
    def macro(self) -> dict[str, float]:
        out = {"accuracy": self.accuracy}
        for name in ("precision", "recall", "f1", "specificity", "jaccard"):
            out[name] = float(np.mean(getattr(self, name)))
        return out

    @property
    def mean_jaccard(self) -> float:
        return float(np.mean(self.jaccard))

    @property
    def macro_f1(self) -> float:
        return float(np.mean(self.f1))

    def to_dict(self) -> dict:
        d = asdict(self)
        d["macro"] = self.macro
        d["classes"] = list(CLASS_NAMES)
        return d


def _ratio(num, den, vacuous: float) -> tuple[float, bool]:
    if den == 0:
        return vacuous, True
    return num / den, False


def compute_metrics(counts: ConfusionCounts, mixed_pixel_rate: float | None = None) -> MetricsReport:
    """Per-class and overall metrics.

    Zero denominators follow one rule: the metric is 1 when the class is
    absent from both prediction and truth (nothing to get wrong), otherwise 0.
    Every such case is listed in ``undefined``.
    """
    P = counts.total
    prec, rec, f1, spec, jac, undefined = [], [], [], [], [], []
    for c, name in enumerate(CLASS_NAMES):
        tp, fp, fn, tn = (int(a[c]) for a in (counts.tp, counts.fp, counts.fn, counts.tn))
        absent = tp + fp + fn == 0
        for lst, metric, num, den, vac in (
            (prec, "precision", tp, tp + fp, 1.0 if fn == 0 else 0.0),
            (rec, "recall", tp, tp + fn, 1.0 if fp == 0 else 0.0),
            (f1, "f1", 2 * tp, 2 * tp + fp + fn, 1.0),
            (spec, "specificity", tn, tn + fp, 1.0),
            (jac, "jaccard", tp, tp + fp + fn, 1.0),
        ):
            v, undef = _ratio(num, den, vac)
            lst.append(float(v))
            if undef and not absent:
                undefined.append(f"{metric}[{name}]")
        if absent:
            undefined.append(f"absent[{name}]")
    acc = float(counts.tp.sum() / P) if P else 1.0
    return MetricsReport(acc, prec, rec, f1, spec, jac, undefined, pixels=P,
                         mixed_pixel_rate=mixed_pixel_rate)


def evaluate(pred, truth) -> MetricsReport:
    return compute_metrics(confusion(pred, truth))


def average_reports(reports: list[MetricsReport]) -> MetricsReport:
    """Unweighted mean of per-image reports (per-image macro, then mean)."""
    if not reports:
        raise ValueError("no reports to average")
    mean = lambda name: [float(v) for v in np.mean([getattr(r, name) for r in reports], axis=0)]
    undefined = sorted({u for r in reports for u in r.undefined})
    return MetricsReport(float(np.mean([r.accuracy for r in reports])), mean("precision"),
                         mean("recall"), mean("f1"), mean("specificity"), mean("jaccard"),
                         undefined, pixels=sum(r.pixels for r in reports), samples=len(reports))


def pearson(x, y) -> float:
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape or x.ndim != 1:
        raise ValueError("pearson needs two 1-D series of equal length")
    if len(x) < 2:
        raise ValueError("pearson needs at least two samples")
    dx, dy = x - x.mean(), y - y.mean()
    sx, sy = np.sqrt(np.dot(dx, dx)), np.sqrt(np.dot(dy, dy))
    if sx == 0 or sy == 0 or sx < 1e-12 * np.abs(x).max() or sy < 1e-12 * np.abs(y).max():
        raise UndefinedStatistic("correlation undefined for a constant series")
    r = np.dot(dx / sx, dy / sy)
    return float(np.clip(r, -1.0, 1.0))


def _average_ranks(a: np.ndarray) -> np.ndarray:
    order = np.argsort(a, kind="mergesort")
    ranks = np.empty(len(a))
    sa = a[order]
    i = 0
    while i < len(a):
        j = i
        while j + 1 < len(a) and sa[j + 1] == sa[i]:
            j += 1
        ranks[order[i:j + 1]] = (i + j) / 2.0 + 1.0
        i = j + 1
    return ranks


@dataclass
class WilcoxonResult:
    statistic: float
    pvalue: float
    n: int
    method: str  # "exact" or "normal"


def wilcoxon_signed_rank(a, b, exact_max_n: int = EXACT_WILCOXON_MAX_N,
                         method: str = "auto") -> WilcoxonResult:
    """Paired two-sided Wilcoxon signed-rank test.

    Zero differences are dropped, tied magnitudes get average ranks and the
    statistic is ``min(W+, W-)``. With ``method="auto"`` the p-value is exact
    (all sign patterns enumerated) for up to ``exact_max_n`` pairs and a
    tie-corrected normal approximation otherwise.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape or a.ndim != 1:
        raise ValueError("wilcoxon needs two 1-D series of equal length")
    d = a - b
    d = d[d != 0]
    m = len(d)
    if m == 0:
        raise UndefinedStatistic("all paired differences are zero")
    ranks = _average_ranks(np.abs(d))
    w_plus = float(ranks[d > 0].sum())
    w_minus = float(ranks[d < 0].sum())
    w = min(w_plus, w_minus)
    if method == "auto":
        method = "exact" if m <= exact_max_n else "normal"
    if method == "exact":
        if m > 20:
            raise ValueError("exact enumeration limited to 20 pairs")
        signs = (np.arange(2 ** m)[:, None] >> np.arange(m)) & 1
        wp = signs @ ranks
        stat = np.minimum(wp, ranks.sum() - wp)
        p = float(np.mean(stat <= w + 1e-9))
    elif method == "normal":
        mu = m * (m + 1) / 4.0
        _, tie_counts = np.unique(ranks, return_counts=True)
        var = m * (m + 1) * (2 * m + 1) / 24.0 - np.sum(tie_counts ** 3 - tie_counts) / 48.0
        if var <= 0:
            raise UndefinedStatistic("zero variance in signed-rank statistic")
        # continuity correction toward the mean
        z = (w - mu + 0.5) / math.sqrt(var)
        p = min(1.0, math.erfc(-z / math.sqrt(2.0)))
    else:
        raise ValueError(f"unknown method {method!r}")
    return WilcoxonResult(w, min(p, 1.0), m, method)
