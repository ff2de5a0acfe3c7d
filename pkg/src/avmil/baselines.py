"""Ablation baselines: one-stream log-sum-exp pooling and the WSDDN-type variant.

The one-stream model drops the localization branch and replaces the
sum-over-proposals with a soft maximum (log-sum-exp) over the classification
scores, keeping the per-modality l2 normalization and fusion of the main
model.  The WSDDN-type model keeps both streams for a single modality but
adds a softmax across classes on the classification stream, producing video
scores in [0, 1] that are trained with per-class binary log-loss.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import VideoBag
from .model import EmbedCache, ModalityTower, ModelConfig, ScoreCache, hinge_loss, hinge_loss_backward, validate_label_matrix
from .nn import (
    GradStore,
    ParamStore,
    l2_normalize,
    l2_normalize_backward,
    linear_backward,
    linear_forward,
    softmax_columns,
    softmax_columns_backward,
    softmax_rows,
    softmax_rows_backward,
)

WSDDN_CLAMP = 1e-7


def lse_pool(x: np.ndarray) -> float:
    """Mean-normalized log-sum-exp: log((1/|P|) sum_p exp(x_p)).

    A smooth stand-in for max, computed with max subtraction.  Satisfies
    mean(x) <= lse_pool(x) <= max(x), with equality iff x is constant.
    """
    x = np.asarray(x)
    if x.ndim != 1 or x.size < 1:
        raise ValueError("lse_pool expects a non-empty 1-D vector")
    m = x.max()
    return float(m + np.log(np.exp(x - m).mean()))


def _lse_pool_columns(A: np.ndarray) -> np.ndarray:
    m = A.max(axis=0, keepdims=True)
    pooled = m + np.log(np.exp(A - m).mean(axis=0, keepdims=True))
    return pooled.reshape(-1)


@dataclass
class OneStreamTowerCache:
    embed: EmbedCache
    A: np.ndarray
    weights: np.ndarray  # softmax over proposals of A; also d(lse)/dA
    pooled: np.ndarray
    normalized: np.ndarray

    @property
    def evidence(self) -> np.ndarray:
        # No localization stream: the classification scores themselves are
        # the only per-proposal evidence this model has.
        return self.A


class OneStreamModel:
    """Classification stream only, pooled per class by log-sum-exp."""

    def __init__(self, config: ModelConfig, rng: np.random.Generator, dtype=np.float32):
        if config.kind != "one_stream":
            raise ValueError(f"OneStreamModel requires kind 'one_stream', got '{config.kind}'")
        self.config = config
        self.dtype = np.dtype(dtype)
        self.params = ParamStore()
        self.towers: dict[str, ModalityTower] = {}
        if "visual" in config.modalities:
            self.towers["visual"] = ModalityTower(
                "visual", config.visual_dim, config.visual_hidden, config.num_classes,
                config.dropout, rng, self.params, self.dtype, with_loc=False,
            )
        if "audio" in config.modalities:
            self.towers["audio"] = ModalityTower(
                "audio", config.audio_dim, config.audio_hidden, config.num_classes,
                config.dropout, rng, self.params, self.dtype, with_loc=False,
            )

    def forward(self, bag: VideoBag, training: bool = False, rng: np.random.Generator | None = None):
        phi = np.zeros(self.config.num_classes, dtype=self.dtype)
        towers: dict[str, OneStreamTowerCache] = {}
        for modality in self.config.modalities:
            tower = self.towers[modality]
            feats = bag.visual if modality == "visual" else bag.audio
            ec = tower.embed(np.asarray(feats, dtype=self.dtype), training, rng)
            A = linear_forward(ec.Z, tower.head.cls)
            pooled = _lse_pool_columns(A).astype(self.dtype)
            normalized = l2_normalize(pooled, self.config.l2_eps)
            towers[modality] = OneStreamTowerCache(
                embed=ec, A=A, weights=softmax_columns(A), pooled=pooled, normalized=normalized
            )
            phi = phi + normalized
        return phi, ScoreCache(towers=towers, phi=phi)

    def backward(self, cache: ScoreCache, dphi: np.ndarray, grads: GradStore) -> None:
        for modality, tc in cache.towers.items():
            tower = self.towers[modality]
            ds = l2_normalize_backward(dphi, tc.pooled, self.config.l2_eps)
            # d lse / dA[:, c] is the proposal softmax of column c.
            dA = tc.weights * ds
            dZ, dWc, dbc = linear_backward(dA, tc.embed.Z, tower.head.cls)
            grads.add(f"{tower.name}.cls.W", dWc)
            grads.add(f"{tower.name}.cls.b", dbc)
            tower.embed_backward(dZ, tc.embed, grads)

    def loss(self, phi: np.ndarray, Y: np.ndarray):
        return hinge_loss(phi, Y), hinge_loss_backward(phi, Y)


@dataclass
class WsddnCache:
    embed: EmbedCache
    A: np.ndarray
    B: np.ndarray
    Sr: np.ndarray  # softmax of A across classes, per proposal
    Sc: np.ndarray  # softmax of B over proposals, per class
    D: np.ndarray
    pooled_raw: np.ndarray

    @property
    def evidence(self) -> np.ndarray:
        return self.D


def binary_log_loss(phi: np.ndarray, Y: np.ndarray) -> float:
    """Mean of C binary log-loss terms per row; phi entries must lie in (0, 1)."""
    phi = np.atleast_2d(phi)
    Y = validate_label_matrix(Y, phi.shape)
    n, C = phi.shape
    pos = Y == 1
    terms = np.where(pos, -np.log(phi), -np.log1p(-phi))
    return float(terms.sum() / (C * n))


def binary_log_loss_backward(phi: np.ndarray, Y: np.ndarray) -> np.ndarray:
    phi = np.atleast_2d(phi)
    Y = validate_label_matrix(Y, phi.shape)
    n, C = phi.shape
    pos = Y == 1
    dphi = np.where(pos, -1.0 / phi, 1.0 / (1.0 - phi))
    return (dphi / (C * n)).astype(phi.dtype)


class WsddnTypeModel:
    """Single-modality two-stream variant with class softmax on the cls stream.

    D = softmax_rows(A) * softmax_cols(B); video scores are column sums of D,
    clamped away from {0, 1} so the log-loss stays finite.
    """

    def __init__(self, config: ModelConfig, rng: np.random.Generator, dtype=np.float32):
        if config.kind != "wsddn_type":
            raise ValueError(f"WsddnTypeModel requires kind 'wsddn_type', got '{config.kind}'")
        self.config = config
        self.dtype = np.dtype(dtype)
        self.params = ParamStore()
        modality = config.modalities[0]
        input_dim = config.visual_dim if modality == "visual" else config.audio_dim
        hidden = config.visual_hidden if modality == "visual" else config.audio_hidden
        self.towers = {
            modality: ModalityTower(
                modality, input_dim, hidden, config.num_classes,
                config.dropout, rng, self.params, self.dtype,
            )
        }

    @property
    def modality(self) -> str:
        return self.config.modalities[0]

    def forward(self, bag: VideoBag, training: bool = False, rng: np.random.Generator | None = None):
        tower = self.towers[self.modality]
        feats = bag.visual if self.modality == "visual" else bag.audio
        ec = tower.embed(np.asarray(feats, dtype=self.dtype), training, rng)
        A = linear_forward(ec.Z, tower.head.cls)
        B = linear_forward(ec.Z, tower.head.loc)
        Sr = softmax_rows(A)
        Sc = softmax_columns(B)
        D = Sr * Sc
        pooled_raw = D.sum(axis=0)
        phi = np.clip(pooled_raw, WSDDN_CLAMP, 1.0 - WSDDN_CLAMP).astype(self.dtype)
        cache = ScoreCache(
            towers={self.modality: WsddnCache(embed=ec, A=A, B=B, Sr=Sr, Sc=Sc, D=D, pooled_raw=pooled_raw)},
            phi=phi,
        )
        return phi, cache

    def backward(self, cache: ScoreCache, dphi: np.ndarray, grads: GradStore) -> None:
        tower = self.towers[self.modality]
        tc = cache.towers[self.modality]
        in_range = (tc.pooled_raw >= WSDDN_CLAMP) & (tc.pooled_raw <= 1.0 - WSDDN_CLAMP)
        ds = np.where(in_range, dphi, 0.0)
        dD = np.broadcast_to(ds, tc.D.shape)
        dSr = dD * tc.Sc
        dSc = dD * tc.Sr
        dA = softmax_rows_backward(dSr, tc.Sr)
        dB = softmax_columns_backward(dSc, tc.Sc)
        dZ_cls, dWc, dbc = linear_backward(dA, tc.embed.Z, tower.head.cls)
        dZ_loc, dWl, dbl = linear_backward(dB, tc.embed.Z, tower.head.loc)
        grads.add(f"{tower.name}.cls.W", dWc)
        grads.add(f"{tower.name}.cls.b", dbc)
        grads.add(f"{tower.name}.loc.W", dWl)
        grads.add(f"{tower.name}.loc.b", dbl)
        tower.embed_backward(dZ_cls + dZ_loc, tc.embed, grads)

    def loss(self, phi: np.ndarray, Y: np.ndarray):
        return binary_log_loss(phi, Y), binary_log_loss_backward(phi, Y)
