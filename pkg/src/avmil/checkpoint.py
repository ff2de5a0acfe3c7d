"""Versioned binary checkpoints: model config header + params in registration order.

Layout (little-endian):

    magic   "AVC1"              4 bytes
    version u16                 (currently 1)
    config  u32 length + UTF-8 JSON (ModelConfig.to_dict plus dtype)
    count   u32                 number of parameters
    per parameter, in registration order:
        name  u16 length + UTF-8
        ndim  u8, dims u32 each
        data  float32/float64 per the header dtype
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from .baselines import OneStreamModel, WsddnTypeModel
from .io import BadMagicError, BagFormatError, _Reader
from .model import AVModel, ModelConfig

CHECKPOINT_MAGIC = b"AVC1"
CHECKPOINT_VERSION = 1

_MODEL_CLASSES = {
    "two_stream": AVModel,
    "one_stream": OneStreamModel,
    "wsddn_type": WsddnTypeModel,
}


def build_model(config: ModelConfig, seed=0, dtype=np.float32):
    """Construct a freshly initialized model of the configured kind.

    ``seed`` is anything ``np.random.default_rng`` accepts (int, SeedSequence).
    """
    rng = np.random.default_rng(seed)
    return _MODEL_CLASSES[config.kind](config, rng, dtype)


def clone_model(model, dtype=None):
    """Copy of a model with identical parameter values, optionally recast.

    A float64 clone of a float32 model serves as the reference when
    finite-difference checking the 32-bit backward pass.
    """
    dtype = model.dtype if dtype is None else np.dtype(dtype)
    twin = build_model(model.config, seed=0, dtype=dtype)
    for name, tensor in model.params.items():
        twin.params[name][...] = tensor.astype(dtype)
    return twin


def save_checkpoint(model, path: str | Path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    header = model.config.to_dict()
    header["dtype"] = model.dtype.name
    header_bytes = json.dumps(header).encode("utf-8")
    parts = [
        CHECKPOINT_MAGIC,
        struct.pack("<H", CHECKPOINT_VERSION),
        struct.pack("<I", len(header_bytes)),
        header_bytes,
        struct.pack("<I", len(model.params)),
    ]
    for name, tensor in model.params.items():
        name_bytes = name.encode("utf-8")
        parts.append(struct.pack("<H", len(name_bytes)))
        parts.append(name_bytes)
        parts.append(struct.pack("<B", tensor.ndim))
        parts.append(struct.pack(f"<{tensor.ndim}I", *tensor.shape))
        parts.append(np.ascontiguousarray(tensor).astype(f"<{tensor.dtype.kind}{tensor.dtype.itemsize}").tobytes())
    path.write_bytes(b"".join(parts))


def load_checkpoint(path: str | Path):
    """Rebuild the model from a checkpoint; raises BagFormatError variants on damage."""
    path = Path(path)
    r = _Reader(path.read_bytes(), path)
    if r.take(4) != CHECKPOINT_MAGIC:
        raise BadMagicError(f"{path}: not an AVC1 checkpoint")
    (version,) = r.unpack("<H")
    if version != CHECKPOINT_VERSION:
        raise BagFormatError(f"{path}: unsupported checkpoint version {version}")
    (header_len,) = r.unpack("<I")
    header = json.loads(r.take(header_len).decode("utf-8"))
    dtype = np.dtype(header.pop("dtype", "float32"))
    config = ModelConfig.from_dict(header)
    model = build_model(config, seed=0, dtype=dtype)
    (count,) = r.unpack("<I")
    if count != len(model.params):
        raise BagFormatError(
            f"{path}: checkpoint has {count} parameters, model expects {len(model.params)}"
        )
    for name, tensor in model.params.items():
        (name_len,) = r.unpack("<H")
        stored_name = r.take(name_len).decode("utf-8")
        if stored_name != name:
            raise BagFormatError(f"{path}: parameter order mismatch ('{stored_name}' vs '{name}')")
        (ndim,) = r.unpack("<B")
        shape = r.unpack(f"<{ndim}I")
        if shape != tensor.shape:
            raise BagFormatError(f"{path}: parameter '{name}' has shape {shape}, expected {tensor.shape}")
        data = r.array(f"<{dtype.kind}{dtype.itemsize}", int(np.prod(shape, dtype=np.int64)))
        tensor[...] = data.reshape(shape)
    if not r.done():
        raise BagFormatError(f"{path}: trailing data after checkpoint content")
    return model
