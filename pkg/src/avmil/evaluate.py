"""Threshold tuning and micro-averaged / class-wise F1 evaluation.

Thresholds are tuned per class on validation scores by exact maximization
over every distinct cut point (midpoints between consecutive unique scores
plus sentinels below the minimum and above the maximum), then applied to
test scores with the rule: predict class c iff score >= threshold_c.
Micro-averaged F1 pools true/false positives and false negatives globally
over all classes and samples.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .data import Dataset


@dataclass
class ConfusionCounts:
    tp: int = 0
    fp: int = 0
    fn: int = 0


def _f1(tp: int, fp: int, fn: int) -> float:
    denom = 2 * tp + fp + fn
    return 2.0 * tp / denom if denom > 0 else 0.0


def micro_f1(counts: ConfusionCounts) -> tuple[float, float, float]:
    """(precision, recall, F1) from global counts; empty denominators give 0."""
    p = counts.tp / (counts.tp + counts.fp) if counts.tp + counts.fp > 0 else 0.0
    r = counts.tp / (counts.tp + counts.fn) if counts.tp + counts.fn > 0 else 0.0
    f1 = 2.0 * p * r / (p + r) if p + r > 0 else 0.0
    return p, r, f1


def candidate_thresholds(values: np.ndarray) -> np.ndarray:
    """Midpoints between consecutive sorted unique values, plus outer sentinels."""
    u = np.unique(np.asarray(values, dtype=np.float64))
    mids = (u[:-1] + u[1:]) / 2.0
    return np.concatenate(([u[0] - 1.0], mids, [u[-1] + 1.0]))


def tune_thresholds(scores: np.ndarray, labels: np.ndarray) -> np.ndarray:
    """Per-class thresholds maximizing that class's F1 on (scores, labels).

    Ties are broken toward the larger threshold (fewer predicted positives).
    """
    scores = np.atleast_2d(np.asarray(scores, dtype=np.float64))
    labels = np.atleast_2d(labels)
    if scores.shape != labels.shape:
        raise ValueError(f"scores {scores.shape} and labels {labels.shape} must align")
    n, C = scores.shape
    thresholds = np.zeros(C)
    for c in range(C):
        col = scores[:, c]
        pos = labels[:, c] == 1
        best_f1, best_t = -1.0, 0.0
        for t in candidate_thresholds(col):
            pred = col >= t
            f1 = _f1(
                int(np.sum(pred & pos)),
                int(np.sum(pred & ~pos)),
                int(np.sum(~pred & pos)),
            )
            if f1 >= best_f1:
                best_f1, best_t = f1, t
        thresholds[c] = best_t
    return thresholds


@dataclass
class EvalReport:
    class_names: list[str]
    thresholds: np.ndarray
    counts: ConfusionCounts
    micro_precision: float
    micro_recall: float
    micro_f1: float
    per_class_f1: np.ndarray
    num_samples: int

    def to_dict(self) -> dict:
        return {
            "num_samples": self.num_samples,
            "micro_precision": self.micro_precision,
            "micro_recall": self.micro_recall,
            "micro_f1": self.micro_f1,
            "counts": {"tp": self.counts.tp, "fp": self.counts.fp, "fn": self.counts.fn},
            "thresholds": [float(t) for t in self.thresholds],
            "per_class_f1": {
                name: float(f1) for name, f1 in zip(self.class_names, self.per_class_f1)
            },
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    def format_table(self) -> str:
        """Aligned human-readable report: micro summary plus class-wise F1."""
        width = max(12, max(len(n) for n in self.class_names) + 2)
        lines = [
            f"samples: {self.num_samples}   tp: {self.counts.tp}  fp: {self.counts.fp}  fn: {self.counts.fn}",
            f"micro-F1: {self.micro_f1:.4f}   precision: {self.micro_precision:.4f}   recall: {self.micro_recall:.4f}",
            "",
            f"{'class':<{width}}{'threshold':>12}{'F1':>10}",
        ]
        for name, t, f1 in zip(self.class_names, self.thresholds, self.per_class_f1):
            lines.append(f"{name:<{width}}{t:>12.4f}{f1:>10.4f}")
        return "\n".join(lines)


def evaluate_scores(
    scores: np.ndarray,
    labels: np.ndarray,
    thresholds: np.ndarray,
    class_names: list[str] | None = None,
) -> EvalReport:
    """Apply per-class thresholds and compute global and class-wise F1."""
    scores = np.atleast_2d(np.asarray(scores, dtype=np.float64))
    labels = np.atleast_2d(labels)
    thresholds = np.asarray(thresholds, dtype=np.float64)
    n, C = scores.shape
    if labels.shape != scores.shape:
        raise ValueError(f"scores {scores.shape} and labels {labels.shape} must align")
    if thresholds.shape != (C,):
        raise ValueError(f"expected {C} thresholds, got shape {thresholds.shape}")
    if class_names is None:
        class_names = [f"class_{c}" for c in range(C)]
    pred = scores >= thresholds
    pos = labels == 1
    counts = ConfusionCounts(
        tp=int(np.sum(pred & pos)),
        fp=int(np.sum(pred & ~pos)),
        fn=int(np.sum(~pred & pos)),
    )
    per_class = np.array(
        [
            _f1(
                int(np.sum(pred[:, c] & pos[:, c])),
                int(np.sum(pred[:, c] & ~pos[:, c])),
                int(np.sum(~pred[:, c] & pos[:, c])),
            )
            for c in range(C)
        ]
    )
    p, r, f1 = micro_f1(counts)
    return EvalReport(
        class_names=list(class_names),
        thresholds=thresholds,
        counts=counts,
        micro_precision=p,
        micro_recall=r,
        micro_f1=f1,
        per_class_f1=per_class,
        num_samples=n,
    )


def score_dataset(model, dataset: Dataset) -> np.ndarray:
    """Evaluation-mode fused scores for every bag, stacked in bag order."""
    return np.stack([model.forward(bag, training=False)[0] for bag in dataset.bags])


def evaluate(model, dataset: Dataset, thresholds: np.ndarray) -> EvalReport:
    if len(thresholds) != dataset.num_classes:
        raise ValueError(
            f"{len(thresholds)} thresholds for {dataset.num_classes} classes"
        )
    scores = score_dataset(model, dataset)
    return evaluate_scores(scores, dataset.labels_matrix(), thresholds, dataset.class_names)
