"""Command-line entry point.

Subcommands:

* ``synth``    generate a synthetic corpus into a data directory
* ``train``    fit a model on a data directory, write a checkpoint
* ``eval``     score a checkpoint on a data directory (recall + consistency)
* ``analyze``  score an external predictions file against annotations only

A data directory holds ``annotations.json``, ``embeddings.txt`` and a
``features/`` subdirectory with one ``<video_id>.crmf`` file per video.

Exit codes: 0 success, 2 configuration or data problem, 3 training
diverged, 4 checkpoint incompatible with the data, 5 predictions that do
not match the annotations.
"""

from __future__ import annotations

import argparse
import os
import sys

from .config import default_run_config, load_run_config
from .data import DataConfig, filter_split, load_corpus, load_embeddings, read_annotations
from .errors import (
    CheckpointMismatchError,
    ConfigError,
    DataError,
    PredictionsMismatchError,
    TrainingDivergedError,
)
from .evaluation import analyze_predictions, evaluate, report_to_json, report_to_table
from .segments import Segment
from .synthetic import emit_corpus, generate_corpus
from .training import load_checkpoint, save_checkpoint, train

_EXIT_CODES = (
    (ConfigError, 2),
    (DataError, 2),
    (OSError, 2),
    (TrainingDivergedError, 3),
    (CheckpointMismatchError, 4),
    (PredictionsMismatchError, 5),
)


def _run_config(args):
    if args.config is None:
        return default_run_config()
    return load_run_config(args.config)


def _load_data_dir(data_dir, config: DataConfig):
    annotations = os.path.join(data_dir, "annotations.json")
    embeddings = os.path.join(data_dir, "embeddings.txt")
    features = os.path.join(data_dir, "features")
    for path in (annotations, embeddings):
        if not os.path.exists(path):
            raise DataError(f"{path} does not exist")
    table = load_embeddings(embeddings)
    result = load_corpus(annotations, features, table, config)
    for vid, reason in result.skipped:
        print(f"skipping {vid}: {reason}", file=sys.stderr)
    if not result.records:
        raise DataError(f"no usable videos in {data_dir}")
    return result.records, table


def cmd_synth(args) -> int:
    run = _run_config(args)
    corpus = generate_corpus(run.synth_config())
    os.makedirs(args.out_dir, exist_ok=True)
    manifest = emit_corpus(corpus, args.out_dir)
    print(f"wrote {manifest['num_videos']} videos to {args.out_dir}")
    print(f"digest {manifest['digest']}")
    return 0


def cmd_train(args) -> int:
    run = _run_config(args)
    data_config = run.data_config()
    records, _ = _load_data_dir(args.data_dir, data_config)
    train_records = filter_split(records, "train")
    if not train_records:
        raise DataError("no records in the train split")
    train_config = run.train_config(loss=args.loss, seed=args.seed)
    extra = {
        "pool_span": data_config.pool_span,
        "max_sentence_len": data_config.max_sentence_len,
    }
    ckpt = train(train_records, train_config, extra)
    save_checkpoint(ckpt, args.out)
    metrics_path = args.metrics if args.metrics else args.out + ".metrics.csv"
    with open(metrics_path, "w", encoding="utf-8") as fh:
        fh.write(ckpt.metrics_csv)
    last = ckpt.metrics_csv.strip().splitlines()[-1]
    print(f"trained {ckpt.epoch} epoch(s) on {len(train_records)} videos")
    print(f"final epoch,loss,bce,tmp,smt: {last}")
    print(f"checkpoint {args.out}")
    print(f"metrics {metrics_path}")
    return 0


def _parse_thresholds(raw: str) -> tuple:
    try:
        values = tuple(float(p) for p in raw.split(",") if p.strip())
    except ValueError:
        raise ConfigError(f"cannot parse thresholds {raw!r}") from None
    if not values or any(not 0 <= v < 1 for v in values):
        raise ConfigError(f"thresholds must lie in [0, 1): {raw!r}")
    return values


def cmd_eval(args) -> int:
    ckpt = load_checkpoint(args.checkpoint)
    data_config = DataConfig(
        l_c=ckpt.config["l_c"],
        pool_span=ckpt.config.get("pool_span", 5),
        max_sentence_len=ckpt.config.get("max_sentence_len", 20),
    )
    records, _ = _load_data_dir(args.data_dir, data_config)
    split = None if args.split == "all" else args.split
    thresholds = _parse_thresholds(args.thresholds)
    report = evaluate(records, ckpt, thresholds, split, args.tau_eval)
    print(report_to_table(report))
    out_path = args.out if args.out else args.checkpoint + ".eval.json"
    with open(out_path, "w", encoding="utf-8") as fh:
        fh.write(report_to_json(report))
    print(f"report {out_path}")
    return 0


def read_predictions(path) -> dict:
    """Parse a predictions TSV: video_id, position, start_s, end_s."""
    preds = {}
    try:
        with open(path, encoding="utf-8") as fh:
            lines = fh.read().splitlines()
    except OSError as exc:
        raise DataError(f"cannot read predictions: {exc}") from None
    for n, line in enumerate(lines, start=1):
        if not line.strip() or line.lstrip().startswith("#"):
            continue
        parts = line.split("\t")
        if len(parts) != 4:
            raise DataError(f"{path}:{n}: expected 4 tab-separated fields")
        vid, pos_raw, start_raw, end_raw = parts
        try:
            key = (vid, int(pos_raw))
            preds[key] = Segment(float(start_raw), float(end_raw))
        except (ValueError, DataError) as exc:
            raise DataError(f"{path}:{n}: {exc}") from None
    if not preds:
        raise DataError(f"{path}: no predictions found")
    return preds


def cmd_analyze(args) -> int:
    preds = read_predictions(args.predictions)
    doc = read_annotations(args.annotations)
    gt_map = {}
    for vid, entry in doc.items():
        try:
            gt_map[vid] = [Segment(float(s), float(e)) for s, e in entry["timestamps"]]
        except (KeyError, TypeError, ValueError, DataError) as exc:
            raise DataError(f"{vid}: bad annotation entry ({exc})") from None
    result = analyze_predictions(preds, gt_map, args.tau_eval)

    def _show(x):
        return "n/a" if x is None else f"{x:.4f}"

    print(f"temporal consistency  {_show(result['temporal_consistency'])}")
    print(f"semantic consistency  {_show(result['semantic_consistency'])}")
    print(f"pairs scored {result['pairs_scored']} (skipped {result['pairs_skipped']})")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="momentloc",
        description="sentence-to-moment localisation: corpus tools, training, evaluation",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic corpus")
    p.add_argument("out_dir", help="directory to write the corpus into")
    p.add_argument("--config", default=None, help="INI run configuration")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("train", help="train a model on a data directory")
    p.add_argument("data_dir")
    p.add_argument("out", help="checkpoint output path")
    p.add_argument("--config", default=None, help="INI run configuration")
    p.add_argument("--loss", default=None,
                   help="loss components, e.g. 'bce' or 'bce,tmp,smt' (overrides config)")
    p.add_argument("--seed", type=int, default=None, help="override the training seed")
    p.add_argument("--metrics", default=None, help="metrics CSV path (default OUT.metrics.csv)")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="score a checkpoint on a data directory")
    p.add_argument("checkpoint")
    p.add_argument("data_dir")
    p.add_argument("--thresholds", default="0.1,0.3,0.5", help="comma-separated IoU thresholds")
    p.add_argument("--split", default="all", choices=("all", "train", "val", "test"))
    p.add_argument("--tau-eval", type=float, default=0.5, dest="tau_eval")
    p.add_argument("--out", default=None, help="JSON report path (default CHECKPOINT.eval.json)")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("analyze", help="audit an external predictions file")
    p.add_argument("predictions", help="TSV: video_id, position, start_s, end_s")
    p.add_argument("annotations", help="annotations JSON file")
    p.add_argument("--tau-eval", type=float, default=0.5, dest="tau_eval")
    p.set_defaults(func=cmd_analyze)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code else 0
    try:
        return args.func(args)
    except tuple(exc for exc, _ in _EXIT_CODES) as exc:
        for klass, code in _EXIT_CODES:
            if isinstance(exc, klass):
                if isinstance(exc, PredictionsMismatchError):
                    for item in exc.unmatched:
                        print(f"unmatched prediction {item}", file=sys.stderr)
                print(f"error: {exc}", file=sys.stderr)
                return code
        raise AssertionError("unreachable")


if __name__ == "__main__":
    sys.exit(main())
