"""Metrics, the cross-backbone comparison table, training-curve plots, and
overfitting / low-performance diagnostics."""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from .data import NUM_CLASSES
from .errors import (
    ComparisonError,
    ConfigurationError,
    EvaluationError,
    PlotError,
)
from .training import Checkpoint, TrainingHistory

_PROB_EPS = 1e-7  # cross-entropy clip, matching the training loss convention

OVERFIT_FLAG = "overfit"
LOW_PERFORMANCE_FLAG = "low_performance"


@dataclass
class DiagnosticThresholds:
    """Cutoffs for flagging pathological training outcomes.

    Defaults are the smallest-complexity rule that reproduces the published
    comparison's verbal flags from its accuracy table.
    """

    overfit_gap_min: float = 0.15
    low_perf_val_max: float = 0.60
    chance_level: float = 1.0 / 3.0

    def __post_init__(self):
        if not (0 < self.chance_level < self.low_perf_val_max < 1):
            raise ConfigurationError(
                "expected 0 < chance_level < low_perf_val_max < 1"
            )


@dataclass
class EvalReport:
    backbone_name: str
    split: str
    accuracy: float
    loss: float
    confusion: list  # rows: true class, cols: predicted class
    per_class_precision: list
    per_class_recall: list
    precision_defined: list
    recall_defined: list
    n_samples: int

    def to_dict(self) -> dict:
        return {
            "backbone_name": self.backbone_name,
            "split": self.split,
            "accuracy": self.accuracy,
            "loss": self.loss,
            "confusion": self.confusion,
            "per_class_precision": self.per_class_precision,
            "per_class_recall": self.per_class_recall,
            "precision_defined": self.precision_defined,
            "recall_defined": self.recall_defined,
            "n_samples": self.n_samples,
        }

    def save(self, path) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(json.dumps(self.to_dict(), indent=2), encoding="utf-8")
        return path

    @classmethod
    def load(cls, path) -> "EvalReport":
        return cls(**json.loads(Path(path).read_text(encoding="utf-8")))


def _resolve_predict_fn(model_or_checkpoint):
    from .backbones import ModelHandle  # local import, avoids heavy import at module load
    import keras

    obj = model_or_checkpoint
    if isinstance(obj, (str, Path)):
        obj = Checkpoint.load(obj)
    if isinstance(obj, Checkpoint):
        loaded = obj.load_model()
        return lambda x: np.asarray(loaded(x, training=False))
    if isinstance(obj, ModelHandle):
        return obj.predict_proba
    if isinstance(obj, keras.Model):
        return lambda x: np.asarray(obj(x, training=False))
    if callable(obj):
        return obj
    raise ConfigurationError(f"cannot evaluate object of type {type(obj).__name__}")


def evaluate(
    model_or_checkpoint,
    stream,
    backbone_name: str = "",
    split: str = "",
) -> EvalReport:
    """Score a model over one pass of a stream.

    Accuracy is the exact fraction of argmax-correct predictions (ties
    resolve to the lowest class index). Confusion rows are indexed by true
    class, columns by predicted class.
    """
    predict_fn = _resolve_predict_fn(model_or_checkpoint)

    n = 0
    loss_sum = 0.0
    confusion = np.zeros((NUM_CLASSES, NUM_CLASSES), dtype=np.int64)
    for images, labels in stream:
        probs = np.asarray(predict_fn(images), dtype=np.float64)
        trues = np.argmax(labels, axis=1)
        preds = np.argmax(probs, axis=1)
        for t, p in zip(trues, preds):
            confusion[int(t), int(p)] += 1
        p_true = np.clip(probs[np.arange(len(trues)), trues], _PROB_EPS, 1.0)
        loss_sum += float(-np.log(p_true).sum())
        n += len(trues)
    if n == 0:
        raise EvaluationError("cannot evaluate an empty stream")

    correct = int(np.trace(confusion))
    col_sums = confusion.sum(axis=0)
    row_sums = confusion.sum(axis=1)
    precision = [
        (confusion[i, i] / col_sums[i]) if col_sums[i] else 0.0 for i in range(NUM_CLASSES)
    ]
    recall = [
        (confusion[i, i] / row_sums[i]) if row_sums[i] else 0.0 for i in range(NUM_CLASSES)
    ]
    return EvalReport(
        backbone_name=backbone_name,
        split=split,
        accuracy=correct / n,
        loss=loss_sum / n,
        confusion=confusion.tolist(),
        per_class_precision=[float(p) for p in precision],
        per_class_recall=[float(r) for r in recall],
        precision_defined=[bool(c) for c in col_sums],
        recall_defined=[bool(r) for r in row_sums],
        n_samples=n,
    )


def diagnose(
    train_accuracy: float,
    val_accuracy: float,
    thresholds: Optional[DiagnosticThresholds] = None,
) -> set:
    """Flag overfitting (train-val gap) and low validation performance."""
    for name, value in (("train_accuracy", train_accuracy), ("val_accuracy", val_accuracy)):
        if not (0 <= value <= 1):
            raise ConfigurationError(f"{name} must be in [0, 1], got {value}")
    thresholds = thresholds or DiagnosticThresholds()
    flags = set()
    if train_accuracy - val_accuracy >= thresholds.overfit_gap_min:
        flags.add(OVERFIT_FLAG)
    if val_accuracy <= thresholds.low_perf_val_max:
        flags.add(LOW_PERFORMANCE_FLAG)
    return flags


@dataclass
class ComparisonRow:
    backbone_name: str
    train_accuracy: float
    val_accuracy: float
    gap: float
    flags: tuple = field(default_factory=tuple)

    def to_dict(self) -> dict:
        return {
            "backbone_name": self.backbone_name,
            "train_accuracy": self.train_accuracy,
            "val_accuracy": self.val_accuracy,
            "gap": self.gap,
            "flags": list(self.flags),
        }

    @classmethod
    def from_dict(cls, payload: dict) -> "ComparisonRow":
        return cls(
            backbone_name=payload["backbone_name"],
            train_accuracy=payload["train_accuracy"],
            val_accuracy=payload["val_accuracy"],
            gap=payload["gap"],
            flags=tuple(payload["flags"]),
        )


def compare(
    report_pairs: Sequence,
    thresholds: Optional[DiagnosticThresholds] = None,
) -> list[ComparisonRow]:
    """Build comparison rows from (train report, val report) pairs."""
    rows = []
    for pair in report_pairs:
        train_report, val_report = pair
        name = getattr(train_report, "backbone_name", None) or getattr(
            val_report, "backbone_name", "?"
        )
        if train_report is None or train_report.split != "train":
            raise ComparisonError(f"backbone {name!r} is missing its train report")
        if val_report is None or val_report.split != "val":
            raise ComparisonError(f"backbone {name!r} is missing its val report")
        flags = diagnose(train_report.accuracy, val_report.accuracy, thresholds)
        rows.append(
            ComparisonRow(
                backbone_name=train_report.backbone_name,
                train_accuracy=train_report.accuracy,
                val_accuracy=val_report.accuracy,
                gap=train_report.accuracy - val_report.accuracy,
                flags=tuple(sorted(flags)),
            )
        )
    return rows


def render_comparison(rows: Sequence[ComparisonRow], format: str = "markdown") -> str:
    """Serialize comparison rows deterministically."""
    if not rows:
        raise ConfigurationError("render_comparison requires at least one row")
    if format == "markdown":
        lines = [
            "| Backbone | Train accuracy | Validation accuracy | Gap | Flags |",
            "| --- | --- | --- | --- | --- |",
        ]
        for r in rows:
            flags = "; ".join(r.flags) if r.flags else "-"
            lines.append(
                f"| {r.backbone_name} | {r.train_accuracy:.4f} | "
                f"{r.val_accuracy:.4f} | {r.gap:+.4f} | {flags} |"
            )
        return "\n".join(lines) + "\n"
    if format == "csv":
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["backbone", "train_accuracy", "val_accuracy", "gap", "flags"])
        for r in rows:
            writer.writerow(
                [
                    r.backbone_name,
                    repr(r.train_accuracy),
                    repr(r.val_accuracy),
                    repr(r.gap),
                    ";".join(r.flags),
                ]
            )
        return buf.getvalue()
    if format == "json":
        return json.dumps([r.to_dict() for r in rows], indent=2) + "\n"
    raise ConfigurationError(f"unknown comparison format {format!r}")


def rows_from_json(text: str) -> list[ComparisonRow]:
    return [ComparisonRow.from_dict(item) for item in json.loads(text)]


def make_history_figure(history: TrainingHistory):
    """Two-panel training-curve figure: accuracy left, loss right."""
    if not history.records:
        raise PlotError("cannot plot an empty history")
    epochs = [r.epoch for r in history.records]
    fig, (ax_acc, ax_loss) = plt.subplots(1, 2, figsize=(11, 4))

    ax_acc.plot(epochs, [r.train_accuracy for r in history.records], label="training accuracy")
    ax_acc.plot(epochs, [r.val_accuracy for r in history.records], label="validation accuracy")
    ax_acc.set_xlabel("epoch")
    ax_acc.set_ylabel("accuracy")
    ax_acc.set_ylim(0.0, 1.05)
    ax_acc.legend()

    ax_loss.plot(epochs, [r.train_loss for r in history.records], label="training loss")
    ax_loss.plot(epochs, [r.val_loss for r in history.records], label="validation loss")
    ax_loss.set_xlabel("epoch")
    ax_loss.set_ylabel("loss")
    ax_loss.legend()

    fig.suptitle(f"{history.backbone_name} (seed {history.seed})")
    fig.tight_layout()
    return fig


def plot_history(history: TrainingHistory, out_path) -> Path:
    """Write the history figure as a raster image and return its path."""
    out_path = Path(out_path)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    fig = make_history_figure(history)
    try:
        fig.savefig(out_path, dpi=120)
    finally:
        plt.close(fig)
    return out_path
