"""Weakly supervised audio-visual event classification and localization.

Trains a two-stream multiple-instance-learning model on bags of precomputed
proposal features using video-level labels only, and exposes the per-proposal
evidence scores that localize each class in the visual regions and audio
segments -- including when the two modalities' cues are not synchronized.
"""

from .baselines import OneStreamModel, WsddnTypeModel, binary_log_loss, lse_pool
from .checkpoint import build_model, load_checkpoint, save_checkpoint
from .data import BagGroundTruth, Dataset, VideoBag, segment_windows
from .evaluate import EvalReport, micro_f1, score_dataset, tune_thresholds
from .io import load_dataset, read_bag, write_bag, write_manifest
from .localize import LocalizationResult, hit_at_k, hit_rate_table, scale_unit
from .model import AVModel, ModelConfig, hinge_loss, pool_and_normalize, score_proposals
from .synth import SynthConfig, degrade_modality, generate
from .train import AdamState, BalancedSampler, TrainConfig, adam_step

# The entry points evaluate(), localize(), and train() live in the
# submodules of the same names (avmil.evaluate.evaluate, ...); re-exporting
# them here would shadow those submodules.

__version__ = "0.1.0"

__all__ = [
    "AVModel",
    "AdamState",
    "BagGroundTruth",
    "BalancedSampler",
    "Dataset",
    "EvalReport",
    "LocalizationResult",
    "ModelConfig",
    "OneStreamModel",
    "SynthConfig",
    "TrainConfig",
    "VideoBag",
    "WsddnTypeModel",
    "adam_step",
    "binary_log_loss",
    "build_model",
    "degrade_modality",
    "generate",
    "hinge_loss",
    "hit_at_k",
    "hit_rate_table",
    "load_checkpoint",
    "load_dataset",
    "lse_pool",
    "micro_f1",
    "pool_and_normalize",
    "read_bag",
    "save_checkpoint",
    "scale_unit",
    "score_dataset",
    "score_proposals",
    "segment_windows",
    "tune_thresholds",
    "write_bag",
    "write_manifest",
]
