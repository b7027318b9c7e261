"""Command-line pipeline: synth -> preprocess -> batch/train -> eval.

Every run is reproducible from its flags alone: configs are JSON, seeds
are explicit, and ``train`` echoes the fully-resolved run configuration
into its output directory. Errors map to distinct exit codes with a
one-line JSON diagnostic on stderr:

  2  usage (argparse), 3 configuration, 4 unreadable/missing path,
  5  data does not satisfy the schema or shapes, 1 anything else.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import batching, ingest, metrics, synth
from .estimator import SequenceClassifier
from .exceptions import (
    ConfigError,
    MetricUndefinedError,
    RowParseError,
    SchemaError,
    ShapeError,
    WardseqError,
)
from .losses import make_loss
from .models import ModelConfig, SequenceModel, grad_check
from .preprocess import FeaturePipeline

EXIT_CONFIG = 3
EXIT_IO = 4
EXIT_DATA = 5

PRESETS: dict[str, dict] = {
    # sliding window over the windowed dataset + weighted BCE + LSTM
    "exp1.1": {"method": "sliding", "window": 21, "architecture": "lstm", "loss": "bce"},
    # dense sliding window + LSTM
    "exp1.2": {"method": "dense", "window": 21, "architecture": "lstm", "loss": "bce"},
    # smart batching over the granular dataset + LSTM
    "exp1.3": {"method": "smart", "architecture": "lstm", "loss": "bce"},
    # dense sliding window + transformer encoder (head 128, 6 heads, ff 64, 2 blocks)
    "exp2.1": {
        "method": "dense",
        "window": 21,
        "architecture": "transformer",
        "loss": "bce",
        "head_size": 128,
        "heads": 6,
        "ff_dim": 64,
        "blocks": 2,
    },
    # smart batching + transformer encoder
    "exp2.2": {
        "method": "smart",
        "architecture": "transformer",
        "loss": "bce",
        "head_size": 128,
        "heads": 6,
        "ff_dim": 64,
        "blocks": 2,
    },
}


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.handler(args)
    except (ConfigError, json.JSONDecodeError) as exc:
        return _fail(exc, EXIT_CONFIG)
    except (FileNotFoundError, PermissionError, IsADirectoryError) as exc:
        return _fail(exc, EXIT_IO)
    except (SchemaError, RowParseError, ShapeError, MetricUndefinedError) as exc:
        return _fail(exc, EXIT_DATA)
    except WardseqError as exc:
        return _fail(exc, 1)


def _fail(exc: Exception, code: int) -> int:
    line = json.dumps({"error": type(exc).__name__, "exit_code": code, "message": str(exc)})
    print(line, file=sys.stderr)
    return code


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="wardseq", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic granular CSV")
    p.add_argument("--config", help="SynthConfig JSON; defaults apply when omitted")
    p.add_argument("--out", required=True, help="output CSV path")
    p.add_argument("--seed", type=int, help="override the config seed")
    p.add_argument("--schema-out", help="where to write the feature schema JSON "
                                        "(default: <out>.schema.json)")
    p.set_defaults(handler=cmd_synth)

    p = sub.add_parser("preprocess", help="window, split and fit encoders")
    p.add_argument("--data", required=True, help="granular CSV")
    p.add_argument("--schema", required=True, help="feature schema JSON")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--granular", action="store_true",
                   help="keep granular rows (adds the time-difference feature) "
                        "instead of 8-hour windowing")
    p.add_argument("--window-hours", type=float, default=8.0)
    p.add_argument("--fractions", default="0.6,0.2,0.2")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(handler=cmd_preprocess)

    p = sub.add_parser("batch", help="materialize batches from a split CSV")
    p.add_argument("--data", required=True, help="split CSV from preprocess")
    p.add_argument("--params", required=True, help="preprocess.json sidecar")
    p.add_argument("--method", required=True, choices=["sliding", "dense", "smart"])
    p.add_argument("--window", type=int, default=21, help="timestamps per sample")
    p.add_argument("--batch-size", type=int, default=32, help="encounters per smart batch")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", help="write the batch set as JSON")
    p.add_argument("--inspect", action="store_true", help="print per-batch summary lines")
    p.set_defaults(handler=cmd_batch)

    p = sub.add_parser("train", help="train a classifier on a preprocessed directory")
    p.add_argument("--data-dir", required=True, help="directory written by preprocess")
    p.add_argument("--out", required=True, help="run output directory")
    p.add_argument("--preset", choices=sorted(PRESETS), help="experiment preset")
    p.add_argument("--method", choices=["sliding", "dense", "smart"])
    p.add_argument("--window", type=int)
    p.add_argument("--batch-size", type=int)
    p.add_argument("--architecture", choices=["lstm", "transformer"])
    p.add_argument("--blocks", type=int)
    p.add_argument("--hidden-size", type=int)
    p.add_argument("--head-size", type=int)
    p.add_argument("--heads", type=int)
    p.add_argument("--ff-dim", type=int)
    p.add_argument("--dropout", type=float)
    p.add_argument("--loss", choices=["bce", "focal"])
    p.add_argument("--gamma", type=float)
    p.add_argument("--class-weighting", choices=["auto", "none"])
    p.add_argument("--optimizer", choices=["adam", "rmsprop"])
    p.add_argument("--lr", type=float)
    p.add_argument("--epochs", type=int)
    p.add_argument("--early-stop-patience", type=int)
    p.add_argument("--plateau-patience", type=int)
    p.add_argument("--seed", type=int)
    p.set_defaults(handler=cmd_train)

    p = sub.add_parser("eval", help="score a checkpoint on a split CSV")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", required=True, help="split CSV from preprocess")
    p.add_argument("--params", required=True, help="preprocess.json sidecar")
    p.add_argument("--method", required=True, choices=["sliding", "dense", "smart"])
    p.add_argument("--window", type=int, default=21)
    p.add_argument("--batch-size", type=int, default=32)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--aggregate", choices=["max", "mean", "last"], default="max")
    p.add_argument("--out", help="write the metrics report JSON")
    p.set_defaults(handler=cmd_eval)

    p = sub.add_parser("gradcheck", help="finite-difference check on a small model")
    p.add_argument("--arch", choices=["lstm", "transformer"], default="lstm")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--blocks", type=int)
    p.add_argument("--tolerance", type=float, default=1e-4)
    p.set_defaults(handler=cmd_gradcheck)

    return parser


# -- subcommand bodies -----------------------------------------------------


def cmd_synth(args) -> int:
    if args.config:
        config = synth.SynthConfig.from_json(_read_text(args.config))
    else:
        config = synth.SynthConfig()
    if args.seed is not None:
        config.seed = args.seed
    frame = synth.generate(config)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    ingest.write_granular_csv(frame, out)
    schema_path = Path(args.schema_out) if args.schema_out else out.with_suffix(out.suffix + ".schema.json")
    schema_path.write_text(config.schema().to_json(), encoding="utf-8")
    print(f"wrote {len(frame)} rows, {frame['encounter_id'].nunique()} encounters -> {out}")
    print(f"wrote schema -> {schema_path}")
    return 0


def cmd_preprocess(args) -> int:
    schema = ingest.FeatureSchema.from_json(_read_text(args.schema))
    frame = ingest.read_granular_csv(args.data, schema)
    if args.granular:
        frame = ingest.add_time_diff(frame)
        schema = schema.with_time_diff()
    else:
        frame = ingest.windowize(frame, schema, args.window_hours)

    fractions = tuple(float(f) for f in args.fractions.split(","))
    assignment = ingest.split_patientwise(frame, fractions, args.seed)
    splits = ingest.partition_by_split(frame, assignment)

    pipeline = FeaturePipeline(schema).fit(splits["train"])

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for name, table in splits.items():
        ingest.write_granular_csv(table, out / f"{name}.csv")
    (out / "preprocess.json").write_text(pipeline.to_json(), encoding="utf-8")
    (out / "split.json").write_text(json.dumps(assignment, indent=2, sort_keys=True), encoding="utf-8")
    for name, table in splits.items():
        print(f"{name}: {len(table)} rows, {table['encounter_id'].nunique()} encounters")
    return 0


def _load_split(data_path: str, params_path: str):
    pipeline = FeaturePipeline.from_json(_read_text(params_path))
    frame = ingest.read_granular_csv(data_path, pipeline.schema)
    encoded = pipeline.transform(frame)
    return batching.to_sequences(encoded, pipeline.feature_columns_), pipeline


def _build_batches(sequences, method: str, window: int, batch_size: int, seed: int,
                   for_training: bool) -> batching.BatchSet:
    if method == "sliding":
        built = batching.sliding_window(sequences, window)
    elif method == "dense":
        built = batching.dense_sliding_window(sequences, window)
    else:
        return batching.smart_batch(sequences, batch_size, seed)
    # per-encounter batches are tiny; regroup them for throughput
    return batching.rebatch(built, batch_size, seed if for_training else None)


def cmd_batch(args) -> int:
    sequences, _ = _load_split(args.data, args.params)
    if args.method == "sliding":
        built = batching.sliding_window(sequences, args.window)
    elif args.method == "dense":
        built = batching.dense_sliding_window(sequences, args.window)
    else:
        built = batching.smart_batch(sequences, args.batch_size, args.seed)
    if args.inspect:
        for i, b in enumerate(built):
            print(
                f"batch {i}: shape={list(b.features.shape)} "
                f"padded={int((~b.mask).sum())} positives={int(b.labels.sum())}"
            )
        print(f"total: {len(built)} batches, {built.n_samples} samples, "
              f"{batching.total_padding(built)} padded steps")
    if args.out:
        Path(args.out).write_text(batching.batchset_to_json(built), encoding="utf-8")
        print(f"wrote {len(built)} batches -> {args.out}")
    return 0


def cmd_train(args) -> int:
    settings = {
        "method": "sliding",
        "window": 21,
        "batch_size": 32,
        "architecture": "lstm",
        "blocks": 2,
        "hidden_size": 32,
        "head_size": 16,
        "heads": 2,
        "ff_dim": 32,
        "dropout": 0.2,
        "loss": "bce",
        "gamma": 2.0,
        "class_weighting": "auto",
        "optimizer": "adam",
        "lr": 1e-3,
        "epochs": 100,
        "early_stop_patience": 10,
        "plateau_patience": 6,
        "seed": 0,
    }
    if args.preset:
        settings.update(PRESETS[args.preset])
    for key in settings:
        value = getattr(args, key, None)
        if value is not None:
            settings[key] = value

    data_dir = Path(args.data_dir)
    train_seqs, pipeline = _load_split(str(data_dir / "train.csv"), str(data_dir / "preprocess.json"))
    val_seqs, _ = _load_split(str(data_dir / "validation.csv"), str(data_dir / "preprocess.json"))

    train_batches = _build_batches(train_seqs, settings["method"], settings["window"],
                                   settings["batch_size"], settings["seed"], for_training=True)
    val_batches = _build_batches(val_seqs, settings["method"], settings["window"],
                                 settings["batch_size"], settings["seed"], for_training=False)

    clf = SequenceClassifier(
        architecture=settings["architecture"],
        blocks=settings["blocks"],
        hidden_size=settings["hidden_size"],
        head_size=settings["head_size"],
        heads=settings["heads"],
        ff_dim=settings["ff_dim"],
        dropout=settings["dropout"],
        loss=settings["loss"],
        gamma=settings["gamma"],
        class_weighting=settings["class_weighting"],
        optimizer=settings["optimizer"],
        lr=settings["lr"],
        epochs=settings["epochs"],
        early_stop_patience=settings["early_stop_patience"],
        plateau_patience=settings["plateau_patience"],
        seed=settings["seed"],
    )
    clf.fit(train_batches, val_batches)

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    clf.model_.save(out / "checkpoint.json")
    (out / "history.jsonl").write_text(clf.history_.to_jsonl(), encoding="utf-8")
    echoed = dict(settings)
    echoed["preset"] = args.preset
    echoed["data_dir"] = str(data_dir)
    echoed["n_features"] = pipeline.encoded_width
    if clf.class_weights_ is not None:
        echoed["class_weights"] = {"w0": clf.class_weights_.w0, "w1": clf.class_weights_.w1}
    (out / "run_config.json").write_text(json.dumps(echoed, indent=2, sort_keys=True), encoding="utf-8")

    best = clf.history_.best_epoch
    epochs_run = len(clf.history_.epochs)
    print(f"trained {epochs_run} epochs (best {best}), params={clf.model_.param_count} -> {out}")
    return 0


def cmd_eval(args) -> int:
    sequences, _ = _load_split(args.data, args.params)
    model = SequenceModel.load(args.checkpoint)
    batches = _build_batches(sequences, args.method, args.window, args.batch_size,
                             args.seed, for_training=False)
    report = metrics.evaluate(model, batches, args.aggregate)
    text = report.to_json()
    if args.out:
        Path(args.out).write_text(text + "\n", encoding="utf-8")
    print(text)
    return 0


def cmd_gradcheck(args) -> int:
    rng = np.random.default_rng(args.seed)
    if args.arch == "lstm":
        config = ModelConfig("lstm", n_features=5, blocks=args.blocks or 2,
                             hidden_size=8, dropout=0.0, seed=args.seed)
    else:
        config = ModelConfig("transformer", n_features=5, blocks=args.blocks or 1,
                             head_size=4, heads=2, ff_dim=8, dropout=0.0, seed=args.seed)
    model = SequenceModel(config)
    features = rng.standard_normal((3, 6, 5))
    mask = np.ones((3, 6), dtype=bool)
    mask[0, :2] = False
    features[~mask] = 0.0
    labels = rng.integers(0, 2, size=3).astype(np.float64)
    error = grad_check(model, features, mask, labels, make_loss("bce"))
    print(f"max relative gradient error: {error:.3e} ({model.param_count} parameters)")
    return 0 if error < args.tolerance else 1


def _read_text(path) -> str:
    return Path(path).read_text(encoding="utf-8")


if __name__ == "__main__":
    sys.exit(main())
