"""Cross-validation, stack-depth sweep and cross-condition experiments."""
from __future__ import annotations

import logging
import platform
from dataclasses import dataclass, field
from itertools import combinations

import numpy as np

from .. import __version__
from ..io import FoldSpec, RunConfig, TernaryLabelMap
from ..metrics import (METRIC_NAMES, MetricsReport, UndefinedStatistic, average_reports,
                       evaluate, wilcoxon_signed_rank)
from ..models.training import FusSegModel, train

log = logging.getLogger(__name__)


@dataclass
class Sample:
    subject_id: str
    stack: object  # FusStack
    labels: TernaryLabelMap
    condition: str = "rest"


def as_samples(dataset) -> list[Sample]:
    out = []
    for i, item in enumerate(dataset):
        if isinstance(item, Sample):
            out.append(item)
        elif hasattr(item, "stack") and hasattr(item, "labels"):
            out.append(Sample(str(getattr(item, "subject_id", i)), item.stack, item.labels,
                              getattr(item.stack, "condition", "rest")))
        else:
            stack, labels = item
            if not isinstance(labels, TernaryLabelMap):
                labels = TernaryLabelMap(labels)
            out.append(Sample(str(i), stack, labels, getattr(stack, "condition", "rest")))
    return out


def make_folds(n: int, spec: FoldSpec) -> list[tuple[list[int], list[int]]]:
    """Shuffle once with the fold seed, then deal test sets round-robin.

    Test sets of different folds never overlap; with ``n == K * test_count``
    every sample is tested exactly once.
    """
    K = spec.K
    if n < K:
        raise ValueError(f"dataset of {n} samples is too small for {K} folds")
    test_count = spec.test_count or n // K
    if test_count < 1 or K * test_count > n:
        raise ValueError(f"cannot draw {K} disjoint test sets of {test_count} from {n} samples")
    order = np.random.default_rng(spec.seed).permutation(n)
    folds = []
    for k in range(K):
        test = sorted(int(order[j]) for j in range(k, K * test_count, K))
        rest = [int(i) for i in order if int(i) not in test]
        train_idx = sorted(rest[:spec.train_count] if spec.train_count else rest)
        if not train_idx:
            raise ValueError("a fold has no training samples")
        folds.append((train_idx, test))
    return folds


def config_label(cfg: RunConfig) -> str:
    n = "avg" if cfg.average_frames else cfg.frames
    return f"{cfg.architecture}/{cfg.loss}/n={n}"


def evaluate_model(model: FusSegModel, samples: list[Sample]) -> tuple[MetricsReport, list[MetricsReport]]:
    per_image = []
    for s in samples:
        _, hard = model.predict(s.stack)
        per_image.append(evaluate(hard, s.labels))
    return average_reports(per_image), per_image


def summarize(reports: list[MetricsReport]) -> dict:
    out = {}
    for name in METRIC_NAMES:
        vals = np.array([r.macro[name] for r in reports])
        out[name] = {"mean": float(vals.mean()), "std": float(vals.std(ddof=0))}
    return out


def compare(label_a: str, a, label_b: str, b, metric: str) -> dict:
    entry = {"a": label_a, "b": label_b, "metric": metric}
    try:
        res = wilcoxon_signed_rank(a, b)
    except UndefinedStatistic as exc:
        entry.update(statistic=None, pvalue=None, n=0, method=None, note=str(exc))
    else:
        entry.update(statistic=res.statistic, pvalue=res.pvalue, n=res.n, method=res.method, note="")
    return entry


@dataclass
class ExperimentReport:
    kind: str
    configs: list[dict]
    folds: list[dict]
    results: dict[str, dict] = field(default_factory=dict)
    comparisons: list[dict] = field(default_factory=list)
    provenance: dict = field(default_factory=dict)

    def per_fold(self, label: str, metric: str) -> list[float]:
        return [f[metric] for f in self.results[label]["per_fold"]]

    def mean(self, label: str, metric: str) -> float:
        return self.results[label]["summary"][metric]["mean"]

    def best(self, metric: str = "f1") -> str:
        return max(self.results, key=lambda k: self.mean(k, metric))

    def to_dict(self) -> dict:
        return {"kind": self.kind, "configs": self.configs, "folds": self.folds,
                "results": self.results, "comparisons": self.comparisons,
                "provenance": self.provenance}


def _provenance(seed) -> dict:
    import torch
    return {"fusseg": __version__, "numpy": np.__version__, "torch": torch.__version__,
            "python": platform.python_version(), "seed": seed}


def run_xval(dataset, configs: list[RunConfig], folds: FoldSpec | None = None,
             progress=None) -> ExperimentReport:
    samples = as_samples(dataset)
    folds = folds or configs[0].folds
    splits = make_folds(len(samples), folds)
    labels = []
    for cfg in configs:
        lab = config_label(cfg)
        while lab in labels:  # keep identical configs apart
            lab += "'"
        labels.append(lab)
    report = ExperimentReport(
        "xval", [dict(label=l, **c.to_dict()) for l, c in zip(labels, configs)],
        [{"fold": k, "train": [samples[i].subject_id for i in tr], "test": [samples[i].subject_id for i in te]}
         for k, (tr, te) in enumerate(splits)],
        provenance=_provenance(folds.seed))
    for lab, cfg in zip(labels, configs):
        fold_reports = []
        for k, (tr, te) in enumerate(splits):
            log.info("%s fold %d/%d", lab, k + 1, len(splits))
            model = train([samples[i] for i in tr], cfg)
            fold_report, _ = evaluate_model(model, [samples[i] for i in te])
            fold_reports.append(fold_report)
            if progress:
                progress(lab, k, fold_report)
        report.results[lab] = {
            "per_fold": [dict(fold=k, **r.macro, jaccard_per_class=r.jaccard, f1_per_class=r.f1)
                         for k, r in enumerate(fold_reports)],
            "summary": summarize(fold_reports),
        }
    for la, lb in combinations(labels, 2):
        report.comparisons.append(compare(la, report.per_fold(la, "f1"), lb, report.per_fold(lb, "f1"), "f1"))
    # per-metric best configuration, the machine-readable analogue of bold table cells
    report.provenance["best"] = {m: report.best(m) for m in METRIC_NAMES}
    return report


def depth_sweep(dataset, depths: list[int], cfg: RunConfig, folds: FoldSpec | None = None,
                progress=None) -> tuple[ExperimentReport, list[tuple]]:
    """One cross-validation per stack depth; returns the report and box-plot rows
    ``(depth, fold, f1, jaccard)``."""
    samples = as_samples(dataset)
    if not depths:
        raise ValueError("no depths given")
    shortest = min(len(s.stack) for s in samples)
    for d in depths:
        if int(d) != d or d < 1 or d > shortest:
            raise ValueError(f"invalid depth {d} (stacks have {shortest} frames)")
    configs = [cfg.replace(frames=int(d), average_frames=False) for d in depths]
    report = run_xval(samples, configs, folds, progress)
    report.kind = "depth_sweep"
    rows = []
    for d, c in zip(depths, report.configs):
        for f in report.results[c["label"]]["per_fold"]:
            rows.append((int(d), f["fold"], f["f1"], f["jaccard"]))
    report.comparisons += [compare(la, report.per_fold(la, "jaccard"), lb, report.per_fold(lb, "jaccard"), "jaccard")
                           for la, lb in combinations(list(report.results), 2)]
    return report, rows


def cross_condition(train_set, test_set, cfg: RunConfig) -> tuple[MetricsReport, dict]:
    """Train on one condition, test on another from disjoint subjects.

    Returns the averaged report and a Table-2 style row (mean and std per
    metric over test images).
    """
    tr, te = as_samples(train_set), as_samples(test_set)
    overlap = {s.subject_id for s in tr} & {s.subject_id for s in te}
    if overlap:
        raise ValueError(f"train and test share subjects: {sorted(overlap)}")
    model = train(tr, cfg)
    avg, per_image = evaluate_model(model, te)
    row = {"model": config_label(cfg),
           "train_condition": sorted({s.condition for s in tr}),
           "test_condition": sorted({s.condition for s in te}),
           "test_subjects": [s.subject_id for s in te]}
    row.update(summarize(per_image))
    row["provenance"] = _provenance(cfg.seed)
    return avg, row
