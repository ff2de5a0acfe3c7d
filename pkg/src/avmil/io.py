"""On-disk formats: AVB1 binary feature bags and JSONL dataset manifests.

Bag file layout (all integers little-endian):

    magic   "AVB1"                      4 bytes
    version u16                         (currently 1)
    C       u16
    labels  C x i8                      (-1 / +1)
    M, d_v, T, d_a                      u32 each
    visual  M * d_v float32
    audio   T * d_a float32
    gt flag u8
    if 1: per class, per modality (visual then audio): u32 count + count x u32

A manifest is a text file with one JSON object per line: a header record
carrying ``classes`` (and optionally ``split``) followed by one record per
bag with fields ``id``, ``labels`` and ``file`` (path relative to the
manifest).  Loading is deterministic and preserves the listed bag order.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from .data import BagGroundTruth, Dataset, VideoBag

BAG_MAGIC = b"AVB1"
BAG_VERSION = 1


class BagFormatError(Exception):
    """Base class for bag file parse failures."""


class BadMagicError(BagFormatError):
    pass


class TruncatedFileError(BagFormatError):
    pass


class NonFiniteValueError(BagFormatError):
    pass


class DimensionMismatchError(BagFormatError):
    pass


class ManifestError(Exception):
    """Raised when a dataset manifest is missing, empty, or inconsistent."""


def write_bag(bag: VideoBag, path: str | Path) -> None:
    """Serialize a validated bag; ``read_bag`` reproduces it bit-exactly."""
    M, d_v = bag.visual.shape
    T, d_a = bag.audio.shape
    C = bag.num_classes
    parts = [
        BAG_MAGIC,
        struct.pack("<HH", BAG_VERSION, C),
        bag.labels.astype("<i1").tobytes(),
        struct.pack("<IIII", M, d_v, T, d_a),
        bag.visual.astype("<f4").tobytes(),
        bag.audio.astype("<f4").tobytes(),
    ]
    gt = bag.ground_truth
    if gt is None:
        parts.append(struct.pack("<B", 0))
    else:
        parts.append(struct.pack("<B", 1))
        for c in range(C):
            for idx in (gt.visual[c], gt.audio[c]):
                idx = np.asarray(idx, dtype="<u4")
                parts.append(struct.pack("<I", idx.size))
                parts.append(idx.tobytes())
    Path(path).write_bytes(b"".join(parts))


class _Reader:
    """Cursor over a byte buffer that raises TruncatedFileError on underrun."""

    def __init__(self, buf: bytes, path: Path):
        self.buf = buf
        self.pos = 0
        self.path = path

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.buf):
            raise TruncatedFileError(f"{self.path}: expected {n} more bytes at offset {self.pos}")
        out = self.buf[self.pos : self.pos + n]
        self.pos += n
        return out

    def unpack(self, fmt: str) -> tuple:
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))

    def array(self, dtype: str, count: int) -> np.ndarray:
        itemsize = np.dtype(dtype).itemsize
        return np.frombuffer(self.take(itemsize * count), dtype=dtype)

    def done(self) -> bool:
        return self.pos == len(self.buf)


def read_bag(path: str | Path, bag_id: str | None = None) -> VideoBag:
    """Parse an AVB1 file, rejecting malformed or non-finite content."""
    path = Path(path)
    r = _Reader(path.read_bytes(), path)
    if r.take(4) != BAG_MAGIC:
        raise BadMagicError(f"{path}: not an AVB1 bag file")
    version, C = r.unpack("<HH")
    if version != BAG_VERSION:
        raise BagFormatError(f"{path}: unsupported format version {version}")
    if C < 1:
        raise DimensionMismatchError(f"{path}: class count must be >= 1, got {C}")
    labels = r.array("<i1", C)
    if not np.all(np.isin(labels, (-1, 1))):
        raise BagFormatError(f"{path}: label bytes must be -1 or +1")
    M, d_v, T, d_a = r.unpack("<IIII")
    if min(M, d_v, T, d_a) < 1:
        raise DimensionMismatchError(
            f"{path}: all of M, d_v, T, d_a must be >= 1, got {(M, d_v, T, d_a)}"
        )
    visual = r.array("<f4", M * d_v).reshape(M, d_v)
    audio = r.array("<f4", T * d_a).reshape(T, d_a)
    for name, feats in (("visual", visual), ("audio", audio)):
        if not np.all(np.isfinite(feats)):
            raise NonFiniteValueError(f"{path}: {name} features contain non-finite values")
    (gt_flag,) = r.unpack("<B")
    ground_truth = None
    if gt_flag == 1:
        vis_sets, aud_sets = [], []
        for _ in range(C):
            for sets, bound, mod in ((vis_sets, M, "visual"), (aud_sets, T, "audio")):
                (count,) = r.unpack("<I")
                idx = r.array("<u4", count).astype(np.int64)
                if idx.size and idx.max() >= bound:
                    raise DimensionMismatchError(f"{path}: ground-truth {mod} index out of range")
                sets.append(idx)
        ground_truth = BagGroundTruth(visual=vis_sets, audio=aud_sets)
    elif gt_flag != 0:
        raise BagFormatError(f"{path}: ground-truth flag must be 0 or 1, got {gt_flag}")
    if not r.done():
        raise BagFormatError(f"{path}: trailing data after bag content")
    return VideoBag(
        id=bag_id if bag_id is not None else path.stem,
        visual=visual.copy(),
        audio=audio.copy(),
        labels=labels.copy(),
        ground_truth=ground_truth,
    )


def write_manifest(dataset: Dataset, manifest_path: str | Path, bag_dir: str = "bags") -> None:
    """Write a dataset as manifest + one AVB1 file per bag under ``bag_dir``."""
    manifest_path = Path(manifest_path)
    manifest_path.parent.mkdir(parents=True, exist_ok=True)
    (manifest_path.parent / bag_dir).mkdir(parents=True, exist_ok=True)
    lines = [json.dumps({"classes": dataset.class_names, "split": dataset.split})]
    for bag in dataset.bags:
        rel = f"{bag_dir}/{bag.id}.avb"
        write_bag(bag, manifest_path.parent / rel)
        lines.append(
            json.dumps({"id": bag.id, "labels": bag.labels.tolist(), "file": rel})
        )
    manifest_path.write_text("\n".join(lines) + "\n")


def load_dataset(manifest_path: str | Path) -> Dataset:
    """Load a manifest and all referenced bags, validating cross-bag consistency."""
    manifest_path = Path(manifest_path)
    if not manifest_path.is_file():
        raise ManifestError(f"manifest not found: {manifest_path}")
    records = []
    for lineno, line in enumerate(manifest_path.read_text().splitlines(), start=1):
        if not line.strip():
            continue
        try:
            records.append(json.loads(line))
        except json.JSONDecodeError as exc:
            raise ManifestError(f"{manifest_path}:{lineno}: invalid JSON ({exc})") from exc
    if not records or "classes" not in records[0]:
        raise ManifestError(f"{manifest_path}: missing header record with class names")
    header, entries = records[0], records[1:]
    if not entries:
        raise ManifestError(f"{manifest_path}: manifest lists no bags")
    class_names = list(header["classes"])
    split = header.get("split", "train")
    bags = []
    for entry in entries:
        for key in ("id", "labels", "file"):
            if key not in entry:
                raise ManifestError(f"{manifest_path}: record missing field '{key}': {entry}")
        bag_path = manifest_path.parent / entry["file"]
        try:
            bag = read_bag(bag_path, bag_id=entry["id"])
        except (BagFormatError, OSError) as exc:
            raise ManifestError(f"bag {entry['id']}: failed to load ({exc})") from exc
        if bag.labels.tolist() != list(entry["labels"]):
            raise ManifestError(f"bag {entry['id']}: manifest labels disagree with bag file")
        bags.append(bag)
    try:
        return Dataset(bags=bags, class_names=class_names, split=split)
    except ValueError as exc:
        raise ManifestError(str(exc)) from exc
