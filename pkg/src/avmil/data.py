"""Core data structures: labeled feature bags, datasets, windowing geometry.

A video is represented as a *bag* of precomputed proposal feature vectors:
M visual region proposals (rows of ``visual``) and T audio segments (rows of
``audio``), sharing one multi-label vector over C classes with entries in
{-1, +1}.  Feature extraction itself happens upstream; this package only
consumes the resulting matrices.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

FEATURE_DTYPE = np.float32
LABEL_DTYPE = np.int8


def check_labels(labels: np.ndarray, name: str = "labels") -> np.ndarray:
    """Validate a {-1,+1} label vector and return it as int8."""
    arr = np.asarray(labels)
    if arr.ndim != 1 or arr.size < 1:
        raise ValueError(f"{name}: expected a non-empty 1-D vector, got shape {arr.shape}")
    if not np.all(np.isin(arr, (-1, 1))):
        raise ValueError(f"{name}: entries must be exactly -1 or +1")
    return arr.astype(LABEL_DTYPE)


def check_features(features: np.ndarray, name: str = "features") -> np.ndarray:
    """Validate a proposal feature matrix (|P| x d, finite) as float32."""
    arr = np.asarray(features)
    if arr.ndim != 2:
        raise ValueError(f"{name}: expected a 2-D matrix, got shape {arr.shape}")
    if arr.shape[0] < 1 or arr.shape[1] < 1:
        raise ValueError(f"{name}: needs at least one row and one column")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name}: contains non-finite values")
    return np.ascontiguousarray(arr, dtype=FEATURE_DTYPE)


@dataclass
class BagGroundTruth:
    """Planted proposal indices per class, per modality (synthetic data only).

    ``visual[c]`` / ``audio[c]`` hold the indices of proposals that carry the
    planted signal for class c; empty arrays for classes without a planting.
    """

    visual: list[np.ndarray]
    audio: list[np.ndarray]

    def validate(self, num_classes: int, num_visual: int, num_audio: int) -> None:
        if len(self.visual) != num_classes or len(self.audio) != num_classes:
            raise ValueError("ground truth must list one index set per class per modality")
        for sets, bound, mod in ((self.visual, num_visual, "visual"), (self.audio, num_audio, "audio")):
            for c, idx in enumerate(sets):
                idx = np.asarray(idx)
                if idx.size and (idx.min() < 0 or idx.max() >= bound):
                    raise ValueError(f"ground truth {mod} indices for class {c} out of range")


@dataclass
class VideoBag:
    """One video: a bag of visual and audio proposal features plus its labels."""

    id: str
    visual: np.ndarray  # (M, d_v) float32
    audio: np.ndarray   # (T, d_a) float32
    labels: np.ndarray  # (C,) int8 over {-1, +1}
    ground_truth: BagGroundTruth | None = None

    def __post_init__(self) -> None:
        self.visual = check_features(self.visual, f"bag {self.id}: visual")
        self.audio = check_features(self.audio, f"bag {self.id}: audio")
        self.labels = check_labels(self.labels, f"bag {self.id}: labels")
        if self.ground_truth is not None:
            self.ground_truth.validate(self.num_classes, self.num_visual, self.num_audio)

    @property
    def num_visual(self) -> int:
        return self.visual.shape[0]

    @property
    def num_audio(self) -> int:
        return self.audio.shape[0]

    @property
    def num_classes(self) -> int:
        return self.labels.shape[0]

    @property
    def positive_classes(self) -> np.ndarray:
        return np.flatnonzero(self.labels == 1)


@dataclass
class Dataset:
    """An ordered, immutable-by-convention collection of bags for one split."""

    bags: list[VideoBag]
    class_names: list[str]
    split: str = "train"

    def __post_init__(self) -> None:
        if not self.bags:
            raise ValueError("dataset must contain at least one bag")
        C = len(self.class_names)
        d_v = self.bags[0].visual.shape[1]
        d_a = self.bags[0].audio.shape[1]
        for bag in self.bags:
            if bag.num_classes != C:
                raise ValueError(f"bag {bag.id}: has {bag.num_classes} classes, dataset has {C}")
            if bag.visual.shape[1] != d_v:
                raise ValueError(f"bag {bag.id}: visual dim {bag.visual.shape[1]} != dataset dim {d_v}")
            if bag.audio.shape[1] != d_a:
                raise ValueError(f"bag {bag.id}: audio dim {bag.audio.shape[1]} != dataset dim {d_a}")
            if self.split == "train" and not np.any(bag.labels == 1):
                raise ValueError(f"bag {bag.id}: training bag has no positive label")

    @property
    def num_classes(self) -> int:
        return len(self.class_names)

    @property
    def visual_dim(self) -> int:
        return self.bags[0].visual.shape[1]

    @property
    def audio_dim(self) -> int:
        return self.bags[0].audio.shape[1]

    def labels_matrix(self) -> np.ndarray:
        """Stack bag labels into an (n, C) int8 matrix in bag order."""
        return np.stack([bag.labels for bag in self.bags])

    def __len__(self) -> int:
        return len(self.bags)


def segment_windows(total_units: int, window: int, stride: int) -> list[tuple[int, int]]:
    """Sliding-window [start, end) index pairs covering ``total_units``.

    Returns windows ``[k*stride, k*stride + window)`` for k = 0..K-1 with
    K = 1 + ceil((total_units - window) / stride) when total_units > window,
    else a single window.  The final window may extend past ``total_units``;
    callers are expected to zero-pad the underlying data.  A 1000-frame
    spectrogram with window 96 / stride 48 yields 20 segments.
    """
    if total_units <= 0 or window <= 0 or stride <= 0:
        raise ValueError("total_units, window, and stride must all be positive")
    if total_units > window:
        count = 1 + math.ceil((total_units - window) / stride)
    else:
        count = 1
    return [(k * stride, k * stride + window) for k in range(count)]
