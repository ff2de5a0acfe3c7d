"""Per-proposal evidence extraction: heatmap columns, ranking, and hit metrics.

For a trained model, the column of the weighted score matrix D belonging to
a class is that class's localization heatmap over proposals -- visual region
scores in temporal proposal order and audio segment scores in segment order.
Scores can be exported raw (for numeric comparison) and affinely rescaled to
[0, 1] (for display).  On synthetic data with planted ground truth, hit@k
checks whether any of the k top-scoring proposals is a planted one.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .data import BagGroundTruth, Dataset, VideoBag


@dataclass
class LocalizationResult:
    """Evidence scores for one bag and one class, per available modality."""

    class_id: int
    visual_scores: np.ndarray | None
    audio_scores: np.ndarray | None
    top_visual: np.ndarray | None  # proposal indices, best first, ties to lower index
    top_audio: np.ndarray | None


def _ranked(scores: np.ndarray) -> np.ndarray:
    # Stable sort on the negated scores keeps the lowest index first on ties.
    return np.argsort(-scores, kind="stable")


def localize(model, bag: VideoBag, class_id: int) -> LocalizationResult:
    """Evaluation-mode per-proposal scores for ``class_id`` in both modalities."""
    if not 0 <= class_id < model.config.num_classes:
        raise ValueError(f"class id {class_id} out of range for {model.config.num_classes} classes")
    _, cache = model.forward(bag, training=False)
    visual = audio = top_v = top_a = None
    if "visual" in cache.towers:
        visual = cache.towers["visual"].evidence[:, class_id].copy()
        top_v = _ranked(visual)
    if "audio" in cache.towers:
        audio = cache.towers["audio"].evidence[:, class_id].copy()
        top_a = _ranked(audio)
    return LocalizationResult(
        class_id=class_id,
        visual_scores=visual,
        audio_scores=audio,
        top_visual=top_v,
        top_audio=top_a,
    )


def scale_unit(scores: np.ndarray) -> np.ndarray:
    """Affine map onto [0, 1]; a constant vector maps to all zeros."""
    scores = np.asarray(scores, dtype=np.float64)
    if scores.size == 0:
        raise ValueError("cannot scale an empty score vector")
    lo, hi = scores.min(), scores.max()
    if hi == lo:
        return np.zeros_like(scores)
    return (scores - lo) / (hi - lo)


def hit_at_k(result: LocalizationResult, ground_truth: BagGroundTruth | None, k: int) -> dict[str, bool | None]:
    """Whether a planted proposal appears among the k top-scoring ones.

    Returns {"visual": flag, "audio": flag}; a flag is None when that
    modality has no scores or no planted indices for this class.
    """
    if ground_truth is None:
        raise ValueError("bag has no planted ground truth")
    if k < 1:
        raise ValueError("k must be >= 1")
    out: dict[str, bool | None] = {}
    for modality, ranked in (("visual", result.top_visual), ("audio", result.top_audio)):
        planted = getattr(ground_truth, modality)[result.class_id]
        if ranked is None or len(planted) == 0:
            out[modality] = None
        else:
            out[modality] = bool(np.isin(ranked[:k], planted).any())
    return out


def hit_rate_table(model, dataset: Dataset, ks: tuple[int, ...] = (1, 3)) -> dict:
    """Aggregate hit@k rates over all (bag, positive class) pairs with ground truth.

    Returns {"visual": {k: rate|None, ...}, "audio": {...}, "pairs": {modality: n}};
    a rate is None when no pair contributed for that modality.
    """
    modalities = ("visual", "audio")
    hits = {m: {k: 0 for k in ks} for m in modalities}
    totals = {m: 0 for m in modalities}
    for bag in dataset.bags:
        if bag.ground_truth is None:
            continue
        for c in bag.positive_classes:
            result = localize(model, bag, int(c))
            flags_by_k = {k: hit_at_k(result, bag.ground_truth, k) for k in ks}
            for m in modalities:
                if flags_by_k[ks[0]][m] is None:
                    continue
                totals[m] += 1
                for k in ks:
                    hits[m][k] += int(flags_by_k[k][m])
    table: dict = {"pairs": dict(totals)}
    for m in modalities:
        table[m] = {k: (hits[m][k] / totals[m] if totals[m] else None) for k in ks}
    return table


def export_heatmaps(model, dataset: Dataset, path: str | Path, class_id: int | None = None) -> int:
    """Write per-bag per-class proposal scores as TSV; returns rows written.

    One row per proposal: bag id, class, modality, proposal index (temporal
    order), raw evidence score, and the [0, 1]-scaled score.  With
    ``class_id`` unset, each bag is exported for its positive classes.
    """
    names = dataset.class_names
    rows = ["bag_id\tclass_id\tclass_name\tmodality\tindex\traw_score\tunit_score"]
    count = 0
    for bag in dataset.bags:
        classes = [class_id] if class_id is not None else [int(c) for c in bag.positive_classes]
        for c in classes:
            result = localize(model, bag, c)
            for modality, scores in (("visual", result.visual_scores), ("audio", result.audio_scores)):
                if scores is None:
                    continue
                unit = scale_unit(scores)
                for i, (raw, u) in enumerate(zip(scores, unit)):
                    rows.append(f"{bag.id}\t{c}\t{names[c]}\t{modality}\t{i}\t{raw!r}\t{u!r}")
                    count += 1
    Path(path).write_text("\n".join(rows) + "\n")
    return count
