"""Command-line entry point: gen, train, eval, localize.

Every command exits 0 on success and nonzero with a one-line diagnostic on
error.  Runs are reproducible: ``gen`` is a pure function of its flags, and
``train`` snapshots its fully resolved configuration into the run directory
before the first step.  The default output root comes from the AVMIL_OUT
environment variable (falling back to ./runs).
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import time
from dataclasses import asdict
from pathlib import Path

import numpy as np

from .checkpoint import build_model, load_checkpoint
from .evaluate import evaluate, score_dataset, tune_thresholds
from .io import load_dataset, write_manifest
from .localize import export_heatmaps, hit_rate_table
from .model import MODEL_KINDS, MODES, ModelConfig
from .synth import SynthConfig, generate
from .train import TrainConfig, train

# Desk-scale hidden widths; full-scale runs pass e.g. 4096,4096 and 128.
DEFAULT_VISUAL_HIDDEN = "64,64"
DEFAULT_AUDIO_HIDDEN = "32"

TRAIN_DEFAULTS = {
    "model": "two_stream",
    "mode": "av",
    "iters": 25000,
    "lr": 1e-5,
    "batch": 24,
    "seed": 0,
    "dropout": 0.5,
    "cap": None,
    "eval_interval": None,
    "hidden_visual": DEFAULT_VISUAL_HIDDEN,
    "hidden_audio": DEFAULT_AUDIO_HIDDEN,
    "checkpoint": None,
    "run_name": None,
}


class CliError(Exception):
    pass


def _out_root(flag_value: str | None) -> Path:
    if flag_value:
        return Path(flag_value)
    return Path(os.environ.get("AVMIL_OUT", "runs"))


def _parse_hidden(text: str) -> tuple[int, ...]:
    text = text.strip()
    if not text:
        return ()
    try:
        return tuple(int(x) for x in text.split(","))
    except ValueError as exc:
        raise CliError(f"bad hidden-width list '{text}' (expected e.g. '64,64')") from exc


def _load_split(data_root: Path, split: str):
    manifest = data_root / split / "manifest.jsonl"
    if not manifest.is_file():
        raise CliError(f"no {split} manifest under {data_root}")
    return load_dataset(manifest)


def cmd_gen(args: argparse.Namespace) -> int:
    cfg = SynthConfig(
        classes=args.classes,
        train_bags=args.train_bags,
        val_bags=args.val_bags,
        test_bags=args.test_bags,
        visual_proposals=args.visual_proposals,
        audio_segments=args.audio_segments,
        visual_dim=args.visual_dim,
        audio_dim=args.audio_dim,
        signal_scale=args.signal_scale,
        noise_sigma=args.noise_sigma,
        planted_visual=args.planted_visual,
        planted_audio=args.planted_audio,
        multilabel_prob=args.multilabel_prob,
        seed=args.seed,
    )
    out = Path(args.out)
    splits = generate(cfg)
    total = 0
    for ds in splits:
        write_manifest(ds, out / ds.split / "manifest.jsonl")
        total += len(ds)
    (out / "synth_config.json").write_text(json.dumps(asdict(cfg), indent=2) + "\n")
    hist = np.zeros(cfg.classes, dtype=np.int64)
    for ds in splits:
        hist += (ds.labels_matrix() == 1).sum(axis=0)
    print(f"wrote {total} bags ({'/'.join(str(len(d)) for d in splits)}) to {out}")
    for name, n in zip(cfg.class_names, hist):
        print(f"  {name}: {int(n)} positive bags")
    return 0


def _resolve_train_settings(args: argparse.Namespace) -> dict:
    """Merge precedence: explicit flags > config file > built-in defaults."""
    given = {k: v for k, v in vars(args).items() if k in TRAIN_DEFAULTS and v is not None}
    from_file = {}
    if args.config:
        try:
            from_file = json.loads(Path(args.config).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise CliError(f"cannot read config file {args.config}: {exc}") from exc
        unknown = set(from_file) - set(TRAIN_DEFAULTS)
        if unknown:
            raise CliError(f"unknown config keys: {sorted(unknown)}")
    return {**TRAIN_DEFAULTS, **from_file, **given}


def cmd_train(args: argparse.Namespace) -> int:
    settings = _resolve_train_settings(args)
    data_root = Path(args.data)
    train_ds = _load_split(data_root, "train")
    val_manifest = data_root / "val" / "manifest.jsonl"
    val_ds = load_dataset(val_manifest) if val_manifest.is_file() else None

    if settings["checkpoint"]:
        model = load_checkpoint(settings["checkpoint"])
        if model.config.kind != settings["model"] or model.config.mode != settings["mode"]:
            raise CliError(
                f"checkpoint is {model.config.kind}/{model.config.mode}, "
                f"flags ask for {settings['model']}/{settings['mode']}"
            )
    else:
        model_config = ModelConfig(
            num_classes=train_ds.num_classes,
            visual_dim=train_ds.visual_dim,
            audio_dim=train_ds.audio_dim,
            kind=settings["model"],
            mode=settings["mode"],
            visual_hidden=_parse_hidden(settings["hidden_visual"]),
            audio_hidden=_parse_hidden(settings["hidden_audio"]),
            dropout=settings["dropout"],
            class_names=train_ds.class_names,
        )
        model = build_model(model_config, seed=np.random.SeedSequence(settings["seed"]).spawn(3)[0])

    run_name = settings["run_name"] or time.strftime("%Y%m%d-%H%M%S") + f"-{settings['model']}-{settings['mode']}"
    run_dir = _out_root(args.out) / run_name
    if run_dir.exists():
        raise CliError(f"run directory already exists: {run_dir}")
    run_dir.mkdir(parents=True)
    (run_dir / "config.json").write_text(json.dumps(settings, indent=2, default=str) + "\n")

    train_config = TrainConfig(
        iterations=settings["iters"],
        learning_rate=settings["lr"],
        batch_size=settings["batch"],
        seed=settings["seed"],
        dropout=settings["dropout"],
        balance_cap=settings["cap"],
        eval_interval=settings["eval_interval"],
        mode=settings["mode"],
    )
    result = train(train_ds, train_config, model=model, val_dataset=val_ds, out_dir=run_dir)
    last = result.trace[-1].loss if result.trace else float("nan")
    print(f"run dir: {run_dir}")
    print(f"steps: {len(result.trace)}  final loss: {last:.6f}")
    if result.best_val_f1 is not None:
        print(f"best validation micro-F1: {result.best_val_f1:.4f} ({result.best_checkpoint})")
    return 0


def cmd_eval(args: argparse.Namespace) -> int:
    model = load_checkpoint(args.checkpoint)
    data_root = Path(args.data)
    val_ds = _load_split(data_root, "val")
    test_ds = _load_split(data_root, "test")
    for ds in (val_ds, test_ds):
        if ds.num_classes != model.config.num_classes:
            raise CliError(
                f"checkpoint has {model.config.num_classes} classes, "
                f"{ds.split} data has {ds.num_classes}"
            )
    val_scores = score_dataset(model, val_ds)
    thresholds = tune_thresholds(val_scores, val_ds.labels_matrix())
    report = evaluate(model, test_ds, thresholds)
    out_dir = Path(args.out) if args.out else Path(args.checkpoint).parent
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "report.json").write_text(report.to_json() + "\n")
    (out_dir / "report.txt").write_text(report.format_table() + "\n")
    print(report.format_table())
    print(f"reports written to {out_dir}")
    return 0


def cmd_localize(args: argparse.Namespace) -> int:
    model = load_checkpoint(args.checkpoint)
    data_root = Path(args.data)
    dataset = _load_split(data_root, args.split)
    class_id = None
    if args.class_name is not None:
        if args.class_name not in dataset.class_names:
            raise CliError(f"unknown class '{args.class_name}' (have: {', '.join(dataset.class_names)})")
        class_id = dataset.class_names.index(args.class_name)
    out_dir = Path(args.out) if args.out else Path(args.checkpoint).parent
    out_dir.mkdir(parents=True, exist_ok=True)
    heatmap_path = out_dir / "heatmaps.tsv"
    rows = export_heatmaps(model, dataset, heatmap_path, class_id=class_id)
    print(f"wrote {rows} score rows to {heatmap_path}")
    if any(bag.ground_truth is not None for bag in dataset.bags):
        ks = (1, args.topk) if args.topk != 1 else (1,)
        table = hit_rate_table(model, dataset, ks=ks)
        lines = ["modality\t" + "\t".join(f"hit@{k}" for k in ks) + "\tpairs"]
        for m in ("visual", "audio"):
            rates = "\t".join(
                "n/a" if table[m][k] is None else f"{table[m][k]:.4f}" for k in ks
            )
            lines.append(f"{m}\t{rates}\t{table['pairs'][m]}")
        hit_text = "\n".join(lines)
        (out_dir / "hits.tsv").write_text(hit_text + "\n")
        print(hit_text)
    else:
        print("no ground truth in dataset; hit table skipped")
    return 0


def make_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="avmil",
        description="Weakly supervised audio-visual event classification and localization.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen", help="generate a synthetic dataset with planted evidence")
    g.add_argument("--out", required=True, help="output directory (train/val/test subdirs)")
    g.add_argument("--classes", type=int, default=5)
    g.add_argument("--train-bags", type=int, default=200)
    g.add_argument("--val-bags", type=int, default=50)
    g.add_argument("--test-bags", type=int, default=50)
    g.add_argument("--visual-proposals", type=int, default=20)
    g.add_argument("--audio-segments", type=int, default=10)
    g.add_argument("--visual-dim", type=int, default=32)
    g.add_argument("--audio-dim", type=int, default=16)
    g.add_argument("--signal-scale", type=float, default=3.0)
    g.add_argument("--noise-sigma", type=float, default=1.0)
    g.add_argument("--planted-visual", type=int, default=2)
    g.add_argument("--planted-audio", type=int, default=2)
    g.add_argument("--multilabel-prob", type=float, default=0.2)
    g.add_argument("--seed", type=int, default=7)
    g.set_defaults(func=cmd_gen)

    t = sub.add_parser("train", help="train a model and write a run directory")
    t.add_argument("--data", required=True, help="dataset root from 'gen'")
    t.add_argument("--out", default=None, help="output root (default: $AVMIL_OUT or ./runs)")
    t.add_argument("--config", default=None, help="JSON config file; flags override it")
    t.add_argument("--model", choices=MODEL_KINDS, default=None)
    t.add_argument("--mode", choices=MODES, default=None)
    t.add_argument("--iters", type=int, default=None)
    t.add_argument("--lr", type=float, default=None)
    t.add_argument("--batch", type=int, default=None)
    t.add_argument("--seed", type=int, default=None)
    t.add_argument("--dropout", type=float, default=None)
    t.add_argument("--cap", type=int, default=None, help="balanced-sampling multiplicity cap")
    t.add_argument("--eval-interval", type=int, default=None)
    t.add_argument("--hidden-visual", dest="hidden_visual", default=None)
    t.add_argument("--hidden-audio", dest="hidden_audio", default=None)
    t.add_argument("--checkpoint", default=None, help="resume parameters from a checkpoint")
    t.add_argument("--run-name", dest="run_name", default=None)
    t.set_defaults(func=cmd_train)

    e = sub.add_parser("eval", help="tune thresholds on val, report micro/class-wise F1 on test")
    e.add_argument("--checkpoint", required=True)
    e.add_argument("--data", required=True)
    e.add_argument("--out", default=None)
    e.set_defaults(func=cmd_eval)

    l = sub.add_parser("localize", help="export per-proposal heatmaps and hit@k table")
    l.add_argument("--checkpoint", required=True)
    l.add_argument("--data", required=True)
    l.add_argument("--out", default=None)
    l.add_argument("--split", default="test", choices=("train", "val", "test"))
    l.add_argument("--class-name", dest="class_name", default=None)
    l.add_argument("--topk", type=int, default=3)
    l.set_defaults(func=cmd_localize)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = make_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except Exception as exc:  # one-line diagnostic contract: nonzero exit, no traceback
        print(f"avmil {args.command}: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
