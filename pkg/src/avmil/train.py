"""Adam optimization, balanced batch sampling, and the training loop.

Batches are drawn label-first: a class is sampled uniformly from a capped
multiplicity list (class c appears min(count_c, cap) times), then a bag is
drawn uniformly from that class's bags, so under-represented classes keep
showing up while frequent classes retain a higher but limited presence.
The whole loop is a deterministic function of (dataset, config, seed).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .checkpoint import build_model, save_checkpoint
from .data import Dataset
from .evaluate import evaluate_scores, score_dataset, tune_thresholds
from .model import ModelConfig
from .nn import GradStore, ParamStore


class TrainingDivergedError(RuntimeError):
    """Raised when the loss turns non-finite; carries the step and batch ids."""

    def __init__(self, step: int, loss: float, bag_ids: list[str]):
        super().__init__(f"non-finite loss {loss} at step {step} (batch: {', '.join(bag_ids)})")
        self.step = step
        self.bag_ids = bag_ids


@dataclass
class TrainConfig:
    iterations: int = 25000
    learning_rate: float = 1e-5
    batch_size: int = 24
    seed: int = 0
    dropout: float = 0.5
    balance_cap: int | None = None  # None: median positive-class count
    eval_interval: int | None = None
    mode: str = "av"

    def __post_init__(self) -> None:
        if self.iterations < 0 or self.batch_size < 1 or self.learning_rate <= 0:
            raise ValueError("iterations must be >= 0, batch_size >= 1, learning_rate > 0")


@dataclass
class AdamState:
    """First/second moment accumulators with bias correction (step count t)."""

    alpha: float
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    t: int = 0
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)

    @classmethod
    def for_params(cls, params: ParamStore, alpha: float, **kwargs) -> "AdamState":
        state = cls(alpha=alpha, **kwargs)
        for name, tensor in params.items():
            state.m[name] = np.zeros_like(tensor)
            state.v[name] = np.zeros_like(tensor)
        return state


def adam_step(params: ParamStore, grads: GradStore, state: AdamState) -> None:
    """One in-place Adam update over every registered parameter."""
    state.t += 1
    bc1 = 1.0 - state.beta1**state.t
    bc2 = 1.0 - state.beta2**state.t
    for name, theta in params.items():
        g = grads[name]
        m = state.m[name]
        v = state.v[name]
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * (g * g)
        theta -= state.alpha * (m / bc1) / (np.sqrt(v / bc2) + state.eps)


def build_sampling_list(class_counts, cap: int) -> list[int]:
    """Class ids with multiplicity min(count, cap); empty classes are omitted."""
    counts = np.asarray(class_counts)
    if cap < 1:
        raise ValueError("cap must be >= 1")
    if counts.ndim != 1 or counts.size < 1 or not np.any(counts > 0):
        raise ValueError("class_counts must contain at least one positive count")
    out: list[int] = []
    for c, n in enumerate(counts):
        if n > 0:
            out.extend([c] * min(int(n), cap))
    return out


class BalancedSampler:
    """Label-first batch sampling over a training dataset."""

    def __init__(self, dataset: Dataset, cap: int | None = None):
        labels = dataset.labels_matrix()
        counts = (labels == 1).sum(axis=0)
        if cap is None:
            cap = max(1, int(np.median(counts[counts > 0])))
        self.cap = cap
        self.sampling_list = np.array(build_sampling_list(counts, cap), dtype=np.int64)
        self.class_bags = [np.flatnonzero(labels[:, c] == 1) for c in range(dataset.num_classes)]

    def sample(self, batch_size: int, rng: np.random.Generator) -> np.ndarray:
        """Bag indices (with possible repeats): uniform class pick, then uniform bag."""
        picks = np.empty(batch_size, dtype=np.int64)
        for i in range(batch_size):
            c = self.sampling_list[rng.integers(len(self.sampling_list))]
            bags = self.class_bags[c]
            picks[i] = bags[rng.integers(len(bags))]
        return picks


@dataclass
class TraceEntry:
    step: int
    loss: float
    val_f1: float | None = None


@dataclass
class TrainResult:
    model: object
    trace: list[TraceEntry]
    final_checkpoint: Path | None = None
    best_checkpoint: Path | None = None
    best_val_f1: float | None = None


def write_trace(trace: list[TraceEntry], path: str | Path) -> None:
    """Loss trace as tab-delimited text: step, loss, optional validation F1."""
    lines = ["step\tloss\tval_f1"]
    for entry in trace:
        val = "" if entry.val_f1 is None else repr(entry.val_f1)
        lines.append(f"{entry.step}\t{entry.loss!r}\t{val}")
    Path(path).write_text("\n".join(lines) + "\n")


def train(
    dataset: Dataset,
    config: TrainConfig,
    model=None,
    val_dataset: Dataset | None = None,
    out_dir: str | Path | None = None,
) -> TrainResult:
    """Run the forward / hinge / backward / Adam loop on balanced batches.

    Builds a two-stream model matching the dataset when none is given.  With
    a validation set and an eval_interval, thresholds are re-tuned on
    validation at each eval point and the best checkpoint (by validation
    micro-F1) is kept alongside the final one.
    """
    if config.batch_size > len(dataset):
        raise ValueError("batch_size exceeds dataset size")
    ss = np.random.SeedSequence(config.seed)
    init_ss, sampler_ss, dropout_ss = ss.spawn(3)
    if model is None:
        model_config = ModelConfig(
            num_classes=dataset.num_classes,
            visual_dim=dataset.visual_dim,
            audio_dim=dataset.audio_dim,
            kind="two_stream",
            mode=config.mode,
            dropout=config.dropout,
            class_names=dataset.class_names,
        )
        model = build_model(model_config, seed=init_ss)
    sampler = BalancedSampler(dataset, cap=config.balance_cap)
    batch_rng = np.random.default_rng(sampler_ss)
    dropout_rng = np.random.default_rng(dropout_ss)
    adam = AdamState.for_params(model.params, alpha=config.learning_rate)
    labels = dataset.labels_matrix()

    out_dir = Path(out_dir) if out_dir is not None else None
    trace: list[TraceEntry] = []
    best_f1: float | None = None
    best_path = None

    for step in range(1, config.iterations + 1):
        batch = sampler.sample(config.batch_size, batch_rng)
        caches = []
        phis = []
        for idx in batch:
            phi, cache = model.forward(dataset.bags[idx], training=True, rng=dropout_rng)
            phis.append(phi)
            caches.append(cache)
        phi_batch = np.stack(phis)
        Y = labels[batch]
        loss, dphi = model.loss(phi_batch, Y)
        if not np.isfinite(loss):
            raise TrainingDivergedError(step, loss, [dataset.bags[i].id for i in batch])
        grads = GradStore(model.params)
        for i, cache in enumerate(caches):
            model.backward(cache, dphi[i], grads)
        adam_step(model.params, grads, adam)

        val_f1 = None
        if (
            config.eval_interval
            and val_dataset is not None
            and step % config.eval_interval == 0
        ):
            val_scores = score_dataset(model, val_dataset)
            thresholds = tune_thresholds(val_scores, val_dataset.labels_matrix())
            report = evaluate_scores(
                val_scores, val_dataset.labels_matrix(), thresholds, val_dataset.class_names
            )
            val_f1 = report.micro_f1
            if out_dir is not None and (best_f1 is None or val_f1 > best_f1):
                best_path = out_dir / "checkpoint-best.avc"
                save_checkpoint(model, best_path)
            if best_f1 is None or val_f1 > best_f1:
                best_f1 = val_f1
        trace.append(TraceEntry(step=step, loss=loss, val_f1=val_f1))

    final_path = None
    if out_dir is not None:
        final_path = out_dir / "checkpoint-final.avc"
        save_checkpoint(model, final_path)
        write_trace(trace, out_dir / "trace.tsv")
    return TrainResult(
        model=model,
        trace=trace,
        final_checkpoint=final_path,
        best_checkpoint=best_path,
        best_val_f1=best_f1,
    )
