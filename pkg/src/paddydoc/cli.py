"""Command-line entry points: ingest, train, sweep, evaluate, compare,
export, serve. Exit codes: 0 success, 1 domain error, 2 usage error."""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .errors import PaddyDocError

DEFAULT_MANIFEST = "manifest.json"
DEFAULT_RUNS_DIR = "runs"


def _add_recipe_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--epochs", type=int, default=100, help="max training epochs")
    parser.add_argument("--batch-size", type=int, default=128)
    parser.add_argument("--learning-rate", type=float, default=0.001)
    parser.add_argument("--patience", type=int, default=10, help="early stopping patience")
    parser.add_argument("--seed", type=int, default=42)
    parser.add_argument("--runs-dir", default=DEFAULT_RUNS_DIR)
    parser.add_argument("--manifest", default=DEFAULT_MANIFEST)
    parser.add_argument(
        "--no-pretrained",
        action="store_true",
        help="random backbone init instead of fetching ImageNet weights (smoke runs)",
    )
    parser.add_argument("--weights-cache", default=None)
    parser.add_argument(
        "--input-size",
        type=int,
        default=None,
        help="override the backbone's canonical input resolution",
    )
    parser.add_argument("--no-augment", action="store_true")


def _hparams(args):
    from .training import EarlyStoppingConfig, HyperParams

    return HyperParams(
        learning_rate=args.learning_rate,
        batch_size=args.batch_size,
        max_epochs=args.epochs,
        early_stopping=EarlyStoppingConfig(patience=args.patience),
    )


def cmd_ingest(args) -> int:
    from .data import assign_splits, scan_dataset

    manifest = scan_dataset(args.data_dir)
    manifest = assign_splits(
        manifest,
        val_fraction=args.val_fraction,
        test_fraction=args.test_fraction,
        seed=args.seed,
    )
    out = manifest.save(args.out)
    counts = manifest.counts
    total = sum(c["total"] for c in counts.values())
    print(f"wrote {out} ({total} records, {len(manifest.rejects)} rejects)")
    for name, tally in counts.items():
        print(
            f"  {name}: total {tally['total']}, train {tally['train']}, "
            f"val {tally['val']}, test {tally['test']}"
        )
    return 0


def _load_manifest(path):
    from .data import DatasetManifest

    return DatasetManifest.load(path)


def cmd_train(args) -> int:
    from .backbones import build_model, get_backbone
    from .data import AugmentationConfig, PreprocessConfig, make_batches
    from .evaluation import evaluate, plot_history
    from .training import train

    spec = get_backbone(args.backbone)
    manifest = _load_manifest(args.manifest)
    hparams = _hparams(args)
    size = args.input_size or spec.input_size
    preprocess = PreprocessConfig(
        target_height=size, target_width=size, batch_size=args.batch_size
    )
    augmentation = AugmentationConfig(enabled=not args.no_augment)

    handle = build_model(
        spec,
        pretrained=not args.no_pretrained,
        weights_cache=args.weights_cache,
        input_size=size,
    )
    train_stream = make_batches(
        manifest, "train", preprocess, augmentation, shuffle=True, seed=args.seed
    )
    val_stream = make_batches(manifest, "val", preprocess, seed=args.seed)
    history, checkpoint = train(
        handle, train_stream, val_stream, hparams, seed=args.seed, runs_dir=args.runs_dir
    )
    history_path = history.save(args.runs_dir)
    plot_path = plot_history(
        history, Path(args.runs_dir) / f"history_{spec.name}_{args.seed}.png"
    )

    run_dir = Path(args.runs_dir) / spec.name / str(args.seed)
    eval_train = make_batches(manifest, "train", preprocess, seed=args.seed)
    eval_val = make_batches(manifest, "val", preprocess, seed=args.seed)
    train_report = evaluate(handle, eval_train, backbone_name=spec.name, split="train")
    val_report = evaluate(handle, eval_val, backbone_name=spec.name, split="val")
    train_report.save(run_dir / "eval_train.json")
    val_report.save(run_dir / "eval_val.json")

    print(f"trained {spec.name} (seed {args.seed}): stopped at epoch {history.stopped_epoch}")
    print(f"  train accuracy {train_report.accuracy:.4f}, val accuracy {val_report.accuracy:.4f}")
    print(f"  history {history_path}")
    print(f"  plot    {plot_path}")
    print(f"  checkpoint {checkpoint.path}")
    return 0


def cmd_sweep(args) -> int:
    from .backbones import list_backbones
    from .data import AugmentationConfig
    from .evaluation import plot_history
    from .training import run_sweep

    if args.backbones.strip() == "all":
        names = [spec.name for spec in list_backbones()]
    else:
        names = [n.strip() for n in args.backbones.split(",") if n.strip()]
    seeds = [int(s) for s in str(args.seeds).split(",") if str(s).strip()]

    manifest = _load_manifest(args.manifest)
    entries = run_sweep(
        names,
        manifest,
        hparams=_hparams(args),
        seeds=seeds,
        augmentation=AugmentationConfig(enabled=not args.no_augment),
        runs_dir=args.runs_dir,
        pretrained=not args.no_pretrained,
        weights_cache=args.weights_cache,
        input_size=args.input_size,
    )

    failures = [e for e in entries if e.error]
    for entry in entries:
        if entry.error:
            print(f"FAILED {entry.backbone_name} seed {entry.seed}: {entry.error}")
        else:
            plot_history(
                entry.history,
                Path(args.runs_dir) / f"history_{entry.backbone_name}_{entry.seed}.png",
            )
            print(
                f"ok {entry.backbone_name} seed {entry.seed}: "
                f"train {entry.train_report.accuracy:.4f}, val {entry.report.accuracy:.4f}"
            )

    if all(e.error for e in entries):
        print("sweep produced no successful runs", file=sys.stderr)
        return 1
    path = _write_comparison(args.runs_dir, args.format)
    print(f"comparison written to {path}")
    if failures:
        print(f"{len(failures)} run(s) failed; see messages above", file=sys.stderr)
    return 0


def _write_comparison(runs_dir, format: str) -> Path:
    from .evaluation import render_comparison

    rows = _comparison_rows(runs_dir)
    ext = {"markdown": "md", "csv": "csv", "json": "json"}.get(format)
    if ext is None:
        from .errors import ConfigurationError

        raise ConfigurationError(f"unknown comparison format {format!r}")
    text = render_comparison(rows, format)
    path = Path(runs_dir) / f"comparison.{ext}"
    path.write_text(text, encoding="utf-8")
    return path


def _comparison_rows(runs_dir):
    """Aggregate per-run eval reports into comparison rows.

    Backbones appear in registry order; accuracies are averaged over seeds.
    """
    from .backbones import list_backbones
    from .evaluation import ComparisonRow, EvalReport, diagnose
    from .errors import ComparisonError

    runs_dir = Path(runs_dir)
    rows = []
    for spec in list_backbones():
        backbone_dir = runs_dir / spec.name
        if not backbone_dir.is_dir():
            continue
        train_accs, val_accs = [], []
        for seed_dir in sorted(backbone_dir.iterdir()):
            train_file = seed_dir / "eval_train.json"
            val_file = seed_dir / "eval_val.json"
            if not seed_dir.is_dir() or not (train_file.exists() or val_file.exists()):
                continue
            if not (train_file.exists() and val_file.exists()):
                raise ComparisonError(
                    f"backbone {spec.name!r} seed {seed_dir.name} is missing a split report"
                )
            train_accs.append(EvalReport.load(train_file).accuracy)
            val_accs.append(EvalReport.load(val_file).accuracy)
        if not train_accs:
            continue
        train_acc = sum(train_accs) / len(train_accs)
        val_acc = sum(val_accs) / len(val_accs)
        rows.append(
            ComparisonRow(
                backbone_name=spec.name,
                train_accuracy=train_acc,
                val_accuracy=val_acc,
                gap=train_acc - val_acc,
                flags=tuple(sorted(diagnose(train_acc, val_acc))),
            )
        )
    if not rows:
        raise ComparisonError(f"no evaluation reports found under {runs_dir}")
    return rows


def cmd_evaluate(args) -> int:
    from .data import PreprocessConfig, make_batches
    from .evaluation import evaluate
    from .training import Checkpoint

    run_dir = Path(args.run)
    checkpoint_dir = run_dir / "best" if (run_dir / "best").is_dir() else run_dir
    checkpoint = Checkpoint.load(checkpoint_dir)
    manifest = _load_manifest(args.manifest)

    size = checkpoint.metadata["input_size"]
    preprocess = PreprocessConfig(
        target_height=size, target_width=size, batch_size=args.batch_size
    )
    stream = make_batches(manifest, args.split, preprocess)
    report = evaluate(
        checkpoint, stream, backbone_name=checkpoint.backbone_name, split=args.split
    )
    print(json.dumps(report.to_dict(), indent=2))
    report_dir = run_dir if checkpoint_dir != run_dir else run_dir.parent
    report.save(report_dir / f"eval_{args.split}.json")
    return 0


def cmd_compare(args) -> int:
    from .evaluation import render_comparison

    rows = _comparison_rows(args.runs_dir)
    print(render_comparison(rows, args.format), end="")
    path = _write_comparison(args.runs_dir, args.format)
    print(f"comparison written to {path}", file=sys.stderr)
    return 0


def cmd_export(args) -> int:
    from .inference import export_model
    from .evaluation import EvalReport
    from .training import Checkpoint

    run_dir = Path(args.run)
    checkpoint_dir = run_dir / "best" if (run_dir / "best").is_dir() else run_dir
    checkpoint = Checkpoint.load(checkpoint_dir)

    metrics = {}
    for split in ("train", "val"):
        report_file = run_dir / f"eval_{split}.json"
        if report_file.exists():
            metrics[f"{split}_accuracy"] = EvalReport.load(report_file).accuracy
    artifact = export_model(checkpoint, args.out, metrics=metrics)
    print(f"exported {checkpoint.backbone_name} to {artifact.directory}")
    print(f"  content_hash {artifact.content_hash}")
    return 0


def cmd_serve(args) -> int:
    from .service import ServiceConfig, serve

    config = ServiceConfig(
        artifact_path=args.artifact,
        catalog_path=args.catalog,
        host=args.host,
        port=args.port,
        max_upload_bytes=args.max_upload_bytes,
        frame_rate_limit_per_s=args.frame_rate_limit,
        log_path=args.log_path,
    )
    serve(config)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="paddydoc",
        description="Rice leaf disease classification: dataset ingestion, "
        "transfer-learning benchmark, and prediction service.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", help="scan a corpus and write manifest.json")
    p.add_argument("--data-dir", required=True)
    p.add_argument("--seed", type=int, default=42)
    p.add_argument("--val-fraction", type=float, default=0.25)
    p.add_argument("--test-fraction", type=float, default=0.0)
    p.add_argument("--out", default=DEFAULT_MANIFEST)
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("train", help="train one backbone")
    p.add_argument("--backbone", required=True)
    _add_recipe_flags(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("sweep", help="train several backbones with one recipe")
    p.add_argument("--backbones", default="all", help="'all' or comma-separated names")
    p.add_argument("--seeds", default="42", help="comma-separated seeds")
    p.add_argument("--format", default="markdown")
    _add_recipe_flags(p)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("evaluate", help="evaluate a run's best checkpoint")
    p.add_argument("--run", required=True, help="run directory (runs/<backbone>/<seed>)")
    p.add_argument("--manifest", default=DEFAULT_MANIFEST)
    p.add_argument("--split", default="val")
    p.add_argument("--batch-size", type=int, default=32)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("compare", help="render the cross-backbone comparison")
    p.add_argument("--runs-dir", default=DEFAULT_RUNS_DIR)
    p.add_argument("--format", default="markdown")
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("export", help="export a run as a serving artifact")
    p.add_argument("--run", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_export)

    p = sub.add_parser("serve", help="serve an exported artifact over HTTP")
    p.add_argument("--artifact", required=True)
    p.add_argument("--catalog", default=None)
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8000)
    p.add_argument("--max-upload-bytes", type=int, default=10 * 1024 * 1024)
    p.add_argument("--frame-rate-limit", type=float, default=1.0)
    p.add_argument("--log-path", default="predictions.log")
    p.set_defaults(func=cmd_serve)

    return parser


def cli_dispatch(argv) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return int(args.func(args) or 0)
    except PaddyDocError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


def main() -> None:
    sys.exit(cli_dispatch(sys.argv[1:]))


if __name__ == "__main__":
    main()
