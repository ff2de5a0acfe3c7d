"""Two-stream audio-visual scoring model with hand-composed gradients.

Each modality tower embeds its proposal features through a small fully
connected stack (ReLU + inverted dropout), then scores every proposal with
two parallel linear maps: a classification stream A and a localization
stream B.  B is softmaxed over proposals per class and gates A elementwise
(D = A * softmax_cols(B)); column sums of D give video-level class scores,
which are l2-normalized per modality and added across modalities into the
fused score vector phi.  Training minimizes a multi-label hinge loss on phi.

Columns of D double as per-proposal localization heatmaps, which is what
lets the model point at visual regions and audio segments independently --
including when their evidence occurs at different times.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any

import numpy as np

from .data import VideoBag
from .nn import (
    L2_EPS,
    GradStore,
    LinearLayer,
    ParamStore,
    dropout,
    dropout_backward,
    init_linear,
    l2_normalize,
    l2_normalize_backward,
    linear_backward,
    linear_forward,
    relu,
    relu_backward,
    softmax_columns,
    softmax_columns_backward,
)

MODEL_KINDS = ("two_stream", "one_stream", "wsddn_type")
MODES = ("av", "visual_only", "audio_only")

# Modalities consumed in each mode, in fusion order.
_MODE_MODALITIES = {
    "av": ("visual", "audio"),
    "visual_only": ("visual",),
    "audio_only": ("audio",),
}


@dataclass
class ModelConfig:
    """Architecture settings shared by all model variants.

    Hidden widths default to the full-scale configuration (9216-dim visual
    features through two 4096-wide layers, 128-dim audio through one
    128-wide layer); desk-scale synthetic runs pass 32/(64, 64) and
    16/(32,) instead.
    """

    num_classes: int
    visual_dim: int = 9216
    audio_dim: int = 128
    kind: str = "two_stream"
    mode: str = "av"
    visual_hidden: tuple[int, ...] = (4096, 4096)
    audio_hidden: tuple[int, ...] = (128,)
    dropout: float = 0.5
    l2_eps: float = L2_EPS
    class_names: list[str] = field(default_factory=list)

    def __post_init__(self) -> None:
        self.visual_hidden = tuple(self.visual_hidden)
        self.audio_hidden = tuple(self.audio_hidden)
        if self.kind not in MODEL_KINDS:
            raise ValueError(f"unknown model kind '{self.kind}', expected one of {MODEL_KINDS}")
        if self.mode not in MODES:
            raise ValueError(f"unknown mode '{self.mode}', expected one of {MODES}")
        if self.kind == "wsddn_type" and self.mode == "av":
            raise ValueError("wsddn_type is single-modality; use visual_only or audio_only")
        if self.num_classes < 1:
            raise ValueError("num_classes must be >= 1")
        if not 0.0 <= self.dropout < 1.0:
            raise ValueError("dropout must be in [0, 1)")
        if self.class_names and len(self.class_names) != self.num_classes:
            raise ValueError("class_names length must match num_classes")

    @property
    def modalities(self) -> tuple[str, ...]:
        return _MODE_MODALITIES[self.mode]

    def to_dict(self) -> dict:
        return {
            "num_classes": self.num_classes,
            "visual_dim": self.visual_dim,
            "audio_dim": self.audio_dim,
            "kind": self.kind,
            "mode": self.mode,
            "visual_hidden": list(self.visual_hidden),
            "audio_hidden": list(self.audio_hidden),
            "dropout": self.dropout,
            "l2_eps": self.l2_eps,
            "class_names": list(self.class_names),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        d = dict(d)
        d["visual_hidden"] = tuple(d.get("visual_hidden", ()))
        d["audio_hidden"] = tuple(d.get("audio_hidden", ()))
        return cls(**d)


@dataclass
class TwoStreamHead:
    """Paired per-proposal scoring maps; ``loc`` is None for one-stream heads."""

    cls: LinearLayer
    loc: LinearLayer | None


@dataclass
class EmbedCache:
    inputs: list[np.ndarray]
    pre_acts: list[np.ndarray]
    masks: list[np.ndarray | None]
    Z: np.ndarray


class ModalityTower:
    """FC stack plus scoring head for one modality; params register under ``name``."""

    def __init__(
        self,
        name: str,
        input_dim: int,
        hidden_dims: tuple[int, ...],
        num_classes: int,
        dropout_rate: float,
        rng: np.random.Generator,
        params: ParamStore,
        dtype=np.float32,
        with_loc: bool = True,
    ):
        self.name = name
        self.dropout_rate = dropout_rate
        self.fc_stack: list[LinearLayer] = []
        d = input_dim
        for i, width in enumerate(hidden_dims):
            layer = init_linear(d, width, rng, dtype)
            params.register(f"{name}.fc{i}.W", layer.W)
            params.register(f"{name}.fc{i}.b", layer.b)
            self.fc_stack.append(layer)
            d = width
        cls_layer = init_linear(d, num_classes, rng, dtype)
        params.register(f"{name}.cls.W", cls_layer.W)
        params.register(f"{name}.cls.b", cls_layer.b)
        loc_layer = None
        if with_loc:
            loc_layer = init_linear(d, num_classes, rng, dtype)
            params.register(f"{name}.loc.W", loc_layer.W)
            params.register(f"{name}.loc.b", loc_layer.b)
        self.head = TwoStreamHead(cls=cls_layer, loc=loc_layer)

    def embed(self, Z0: np.ndarray, training: bool, rng: np.random.Generator | None) -> EmbedCache:
        inputs, pre_acts, masks = [], [], []
        X = Z0
        for layer in self.fc_stack:
            inputs.append(X)
            H = linear_forward(X, layer)
            pre_acts.append(H)
            R = relu(H)
            X, mask = dropout(R, self.dropout_rate, rng, training)
            masks.append(mask)
        return EmbedCache(inputs=inputs, pre_acts=pre_acts, masks=masks, Z=X)

    def embed_backward(self, dZ: np.ndarray, cache: EmbedCache, grads: GradStore) -> np.ndarray:
        for i in reversed(range(len(self.fc_stack))):
            dZ = dropout_backward(dZ, cache.masks[i])
            dZ = relu_backward(dZ, cache.pre_acts[i])
            dZ, dW, db = linear_backward(dZ, cache.inputs[i], self.fc_stack[i])
            grads.add(f"{self.name}.fc{i}.W", dW)
            grads.add(f"{self.name}.fc{i}.b", db)
        return dZ


def score_proposals(Z: np.ndarray, head: TwoStreamHead):
    """Two-stream scoring: A = Z Wcls + b, B = Z Wloc + b, D = A * softmax_cols(B).

    No softmax is applied to the classification stream: proposals may carry
    several classes at once, so A stays an unnormalized score matrix.
    Returns (A, B, S, D) with S = softmax_columns(B).
    """
    if head.loc is None:
        raise ValueError("score_proposals requires a head with a localization stream")
    A = linear_forward(Z, head.cls)
    B = linear_forward(Z, head.loc)
    S = softmax_columns(B)
    D = A * S
    return A, B, S, D


def pool_proposals(D: np.ndarray) -> np.ndarray:
    """Video-level class scores: sum of weighted proposal scores per class."""
    return D.sum(axis=0)


def pool_and_normalize(D: np.ndarray, eps: float = L2_EPS) -> np.ndarray:
    return l2_normalize(pool_proposals(D), eps)


@dataclass
class TowerScoreCache:
    embed: EmbedCache
    A: np.ndarray
    B: np.ndarray
    S: np.ndarray
    D: np.ndarray
    pooled: np.ndarray
    normalized: np.ndarray

    @property
    def evidence(self) -> np.ndarray:
        """Per-proposal localization scores (columns are class heatmaps)."""
        return self.D


@dataclass
class ScoreCache:
    """Everything the backward pass needs from one bag's forward pass."""

    towers: dict[str, Any]
    phi: np.ndarray


def validate_label_matrix(Y: np.ndarray, phi_shape: tuple) -> np.ndarray:
    Y = np.asarray(Y)
    if Y.shape != phi_shape:
        raise ValueError(f"label matrix shape {Y.shape} does not match scores {phi_shape}")
    if not np.all(np.isin(Y, (-1, 1))):
        raise ValueError("labels must be -1 or +1")
    return Y


def hinge_loss(phi: np.ndarray, Y: np.ndarray) -> float:
    """Multi-label hinge loss averaged over classes and batch rows.

    L = 1/(C n) * sum_n sum_c max(0, 1 - y_nc phi_nc).
    """
    phi = np.atleast_2d(phi)
    Y = validate_label_matrix(Y, phi.shape)
    n, C = phi.shape
    margins = 1.0 - Y.astype(phi.dtype) * phi
    return float(np.maximum(margins, 0).sum() / (C * n))


def hinge_loss_backward(phi: np.ndarray, Y: np.ndarray) -> np.ndarray:
    """Gradient of hinge_loss wrt phi; subgradient at the kink taken as 0."""
    phi = np.atleast_2d(phi)
    Y = validate_label_matrix(Y, phi.shape)
    n, C = phi.shape
    Yf = Y.astype(phi.dtype)
    active = (1.0 - Yf * phi) > 0
    return np.where(active, -Yf, phi.dtype.type(0)) / (C * n)


class AVModel:
    """The two-stream audio-visual model (optionally single-modality).

    Towers are built for the modalities the configured mode uses; a tower
    that exists but is excluded by the mode (possible after narrowing the
    mode on an existing model) simply receives zero gradients.
    """

    def __init__(self, config: ModelConfig, rng: np.random.Generator, dtype=np.float32):
        if config.kind != "two_stream":
            raise ValueError(f"AVModel requires kind 'two_stream', got '{config.kind}'")
        self.config = config
        self.dtype = np.dtype(dtype)
        self.params = ParamStore()
        self.towers: dict[str, ModalityTower] = {}
        if "visual" in config.modalities:
            self.towers["visual"] = ModalityTower(
                "visual", config.visual_dim, config.visual_hidden, config.num_classes,
                config.dropout, rng, self.params, self.dtype,
            )
        if "audio" in config.modalities:
            self.towers["audio"] = ModalityTower(
                "audio", config.audio_dim, config.audio_hidden, config.num_classes,
                config.dropout, rng, self.params, self.dtype,
            )

    def _features(self, bag: VideoBag, modality: str) -> np.ndarray:
        feats = bag.visual if modality == "visual" else bag.audio
        return np.asarray(feats, dtype=self.dtype)

    def forward(self, bag: VideoBag, training: bool = False, rng: np.random.Generator | None = None):
        """Score one bag; returns (phi, cache).  Eval mode disables dropout."""
        phi = np.zeros(self.config.num_classes, dtype=self.dtype)
        towers: dict[str, TowerScoreCache] = {}
        for modality in self.config.modalities:
            tower = self.towers[modality]
            ec = tower.embed(self._features(bag, modality), training, rng)
            A, B, S, D = score_proposals(ec.Z, tower.head)
            pooled = pool_proposals(D)
            normalized = l2_normalize(pooled, self.config.l2_eps)
            towers[modality] = TowerScoreCache(
                embed=ec, A=A, B=B, S=S, D=D, pooled=pooled, normalized=normalized
            )
            phi = phi + normalized
        return phi, ScoreCache(towers=towers, phi=phi)

    def backward(self, cache: ScoreCache, dphi: np.ndarray, grads: GradStore) -> None:
        """Accumulate parameter gradients for one bag given dL/dphi."""
        for modality, tc in cache.towers.items():
            tower = self.towers[modality]
            ds = l2_normalize_backward(dphi, tc.pooled, self.config.l2_eps)
            dD = np.broadcast_to(ds, tc.D.shape)
            dA = dD * tc.S
            dS = dD * tc.A
            dB = softmax_columns_backward(dS, tc.S)
            dZ_cls, dWc, dbc = linear_backward(dA, tc.embed.Z, tower.head.cls)
            dZ_loc, dWl, dbl = linear_backward(dB, tc.embed.Z, tower.head.loc)
            grads.add(f"{tower.name}.cls.W", dWc)
            grads.add(f"{tower.name}.cls.b", dbc)
            grads.add(f"{tower.name}.loc.W", dWl)
            grads.add(f"{tower.name}.loc.b", dbl)
            tower.embed_backward(dZ_cls + dZ_loc, tc.embed, grads)

    def loss(self, phi: np.ndarray, Y: np.ndarray):
        """Batch loss and its gradient wrt phi."""
        return hinge_loss(phi, Y), hinge_loss_backward(phi, Y)
