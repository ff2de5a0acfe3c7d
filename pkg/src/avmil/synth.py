"""Synthetic asynchronous audio-visual bags with planted, recorded evidence.

Each class gets one fixed random unit direction per modality.  A bag is
background noise with the signal direction (scaled by ``signal_scale``)
planted at a few random proposal indices per positive class -- visual and
audio indices drawn independently, so the audio evidence almost never lines
up in time with the visual evidence.  Planted indices are recorded as
ground truth, which makes localization quantifiable.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import BagGroundTruth, Dataset, VideoBag


@dataclass
class SynthConfig:
    classes: int = 5
    train_bags: int = 200
    val_bags: int = 50
    test_bags: int = 50
    visual_proposals: int = 20  # M
    audio_segments: int = 10    # T
    visual_dim: int = 32
    audio_dim: int = 16
    signal_scale: float = 3.0
    noise_sigma: float = 1.0
    planted_visual: int = 2     # k_v
    planted_audio: int = 2      # k_a
    multilabel_prob: float = 0.2
    seed: int = 7

    def __post_init__(self) -> None:
        positives = (
            self.classes >= 1
            and min(self.train_bags, self.val_bags, self.test_bags) >= 1
            and min(self.visual_proposals, self.audio_segments) >= 1
            and min(self.visual_dim, self.audio_dim) >= 1
            and min(self.planted_visual, self.planted_audio) >= 1
        )
        if not positives:
            raise ValueError("all synthetic counts and dimensions must be >= 1")
        if self.planted_visual > self.visual_proposals or self.planted_audio > self.audio_segments:
            raise ValueError("planted counts cannot exceed the number of proposals")
        if not 0.0 <= self.multilabel_prob <= 1.0:
            raise ValueError("multilabel_prob must be in [0, 1]")
        if self.noise_sigma < 0 or self.signal_scale < 0:
            raise ValueError("noise_sigma and signal_scale must be non-negative")

    @property
    def class_names(self) -> list[str]:
        return [f"class_{c}" for c in range(self.classes)]


def _unit_directions(rng: np.random.Generator, count: int, dim: int) -> np.ndarray:
    dirs = rng.standard_normal((count, dim))
    return dirs / np.linalg.norm(dirs, axis=1, keepdims=True)


def _plant(
    features: np.ndarray,
    positive: np.ndarray,
    directions: np.ndarray,
    per_class: int,
    scale: float,
    sigma: float,
    rng: np.random.Generator,
) -> list[np.ndarray]:
    """Overwrite per_class proposals per positive class with signal + noise.

    Indices are disjoint across the bag's positive classes so every recorded
    ground-truth index genuinely carries its class's signal.
    """
    total = features.shape[0]
    if len(positive) * per_class > total:
        raise ValueError("too many positive classes to plant disjoint evidence")
    order = rng.permutation(total)
    sets: list[np.ndarray] = [np.empty(0, dtype=np.int64) for _ in range(directions.shape[0])]
    for slot, c in enumerate(positive):
        idx = np.sort(order[slot * per_class : (slot + 1) * per_class])
        noise = rng.normal(0.0, sigma, size=(per_class, features.shape[1])) if sigma > 0 else 0.0
        features[idx] = scale * directions[c] + noise
        sets[c] = idx
    return sets


def _make_bag(
    bag_id: str,
    cfg: SynthConfig,
    mu_v: np.ndarray,
    mu_a: np.ndarray,
    rng: np.random.Generator,
) -> VideoBag:
    C = cfg.classes
    labels = np.full(C, -1, dtype=np.int8)
    labels[rng.integers(C)] = 1
    if C > 1 and cfg.multilabel_prob > 0:
        extra = rng.random(C) < cfg.multilabel_prob
        labels[extra] = 1
    positive = np.flatnonzero(labels == 1)

    def background(rows: int, dim: int) -> np.ndarray:
        if cfg.noise_sigma > 0:
            return rng.normal(0.0, cfg.noise_sigma, size=(rows, dim))
        return np.zeros((rows, dim))

    visual = background(cfg.visual_proposals, cfg.visual_dim)
    audio = background(cfg.audio_segments, cfg.audio_dim)
    vis_sets = _plant(visual, positive, mu_v, cfg.planted_visual, cfg.signal_scale, cfg.noise_sigma, rng)
    aud_sets = _plant(audio, positive, mu_a, cfg.planted_audio, cfg.signal_scale, cfg.noise_sigma, rng)
    return VideoBag(
        id=bag_id,
        visual=visual,
        audio=audio,
        labels=labels,
        ground_truth=BagGroundTruth(visual=vis_sets, audio=aud_sets),
    )


def generate(cfg: SynthConfig) -> tuple[Dataset, Dataset, Dataset]:
    """Deterministic (train, val, test) datasets with planted ground truth.

    Per-bag RNG streams derive from (seed, split, bag index), so generation
    is reproducible bit-for-bit and could be parallelized per bag.
    """
    root = np.random.SeedSequence(cfg.seed)
    dir_ss, train_ss, val_ss, test_ss = root.spawn(4)
    dir_rng = np.random.default_rng(dir_ss)
    mu_v = _unit_directions(dir_rng, cfg.classes, cfg.visual_dim)
    mu_a = _unit_directions(dir_rng, cfg.classes, cfg.audio_dim)

    datasets = []
    for split, count, ss in (
        ("train", cfg.train_bags, train_ss),
        ("val", cfg.val_bags, val_ss),
        ("test", cfg.test_bags, test_ss),
    ):
        bags = [
            _make_bag(f"{split}-{i:04d}", cfg, mu_v, mu_a, np.random.default_rng(child))
            for i, child in enumerate(ss.spawn(count))
        ]
        datasets.append(Dataset(bags=bags, class_names=cfg.class_names, split=split))
    return tuple(datasets)


def degrade_modality(
    dataset: Dataset,
    modality: str,
    fraction: float,
    seed: int = 0,
    noise_sigma: float = 1.0,
) -> Dataset:
    """Replace one modality's planted evidence with noise in floor(fraction * n) bags.

    Degraded bags lose their ground truth for that modality (the evidence is
    gone); everything else is copied unchanged.  Models the case where one
    modality's cue is simply absent from the recording.
    """
    if modality not in ("visual", "audio"):
        raise ValueError(f"modality must be 'visual' or 'audio', got '{modality}'")
    if not 0.0 <= fraction <= 1.0:
        raise ValueError("fraction must be in [0, 1]")
    n = len(dataset.bags)
    count = int(np.floor(fraction * n))
    rng = np.random.default_rng(seed)
    chosen = set(rng.choice(n, size=count, replace=False).tolist()) if count else set()
    C = dataset.num_classes
    bags = []
    for i, bag in enumerate(dataset.bags):
        features = {"visual": bag.visual.copy(), "audio": bag.audio.copy()}
        gt = bag.ground_truth
        if gt is not None:
            gt = BagGroundTruth(
                visual=[np.array(s, dtype=np.int64) for s in gt.visual],
                audio=[np.array(s, dtype=np.int64) for s in gt.audio],
            )
        if i in chosen and gt is not None:
            target = features[modality]
            planted_sets = getattr(gt, modality)
            planted = np.unique(np.concatenate(planted_sets)).astype(np.int64)
            if planted.size:
                target[planted] = rng.normal(0.0, noise_sigma, size=(planted.size, target.shape[1]))
            setattr(gt, modality, [np.empty(0, dtype=np.int64) for _ in range(C)])
        bags.append(
            VideoBag(
                id=bag.id,
                visual=features["visual"],
                audio=features["audio"],
                labels=bag.labels.copy(),
                ground_truth=gt,
            )
        )
    return Dataset(bags=bags, class_names=list(dataset.class_names), split=dataset.split)
