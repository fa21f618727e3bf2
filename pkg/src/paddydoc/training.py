"""Training loop: adaptive-moment optimization of the head with per-epoch
history, early stopping on a monitored metric, and best-epoch checkpoints."""

from __future__ import annotations

import datetime as _dt
import json
import math
import time
from dataclasses import dataclass, field, asdict
from pathlib import Path
from typing import Optional, Sequence

import keras
import numpy as np
import tensorflow as tf

from .backbones import (
    HeadSpec,
    ModelHandle,
    build_model,
    get_backbone,
)
from .data import (
    AugmentationConfig,
    DEFAULT_SEED,
    DatasetManifest,
    PreprocessConfig,
    make_batches,
)
from .errors import (
    CheckpointError,
    ConfigurationError,
    DivergenceError,
    PaddyDocError,
)

MONITOR_KEYS = ("train_accuracy", "train_loss", "val_accuracy", "val_loss")


@dataclass
class EarlyStoppingConfig:
    monitor: str = "val_loss"
    patience: int = 10
    min_delta: float = 0.0
    restore_best: bool = True

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class HyperParams:
    """The common training recipe shared by every backbone."""

    learning_rate: float = 0.001
    batch_size: int = 128
    max_epochs: int = 100
    optimizer: str = "adam"
    loss: str = "categorical_crossentropy"
    early_stopping: EarlyStoppingConfig = field(default_factory=EarlyStoppingConfig)

    def __post_init__(self):
        if self.optimizer != "adam":
            raise ConfigurationError(f"unsupported optimizer {self.optimizer!r}")
        if self.loss != "categorical_crossentropy":
            raise ConfigurationError(f"unsupported loss {self.loss!r}")
        if self.max_epochs < 0:
            raise ConfigurationError("max_epochs must be >= 0")

    def to_dict(self) -> dict:
        payload = asdict(self)
        payload["early_stopping"] = self.early_stopping.to_dict()
        return payload


@dataclass
class EpochRecord:
    epoch: int
    train_accuracy: float
    train_loss: float
    val_accuracy: float
    val_loss: float

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class TrainingHistory:
    backbone_name: str
    seed: int
    records: list[EpochRecord]
    stopped_epoch: int
    best_epoch: int
    wall_time_s: float
    hparams: Optional[dict] = None

    def to_dict(self) -> dict:
        return {
            "backbone": self.backbone_name,
            "seed": self.seed,
            "hparams": self.hparams,
            "records": [r.to_dict() for r in self.records],
            "stopped_epoch": self.stopped_epoch,
            "best_epoch": self.best_epoch,
            "wall_time_s": self.wall_time_s,
        }

    def save(self, directory) -> Path:
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        path = directory / f"history_{self.backbone_name}_{self.seed}.json"
        path.write_text(json.dumps(self.to_dict(), indent=2), encoding="utf-8")
        return path

    @classmethod
    def load(cls, path) -> "TrainingHistory":
        payload = json.loads(Path(path).read_text(encoding="utf-8"))
        return cls(
            backbone_name=payload["backbone"],
            seed=payload["seed"],
            records=[EpochRecord(**r) for r in payload["records"]],
            stopped_epoch=payload["stopped_epoch"],
            best_epoch=payload["best_epoch"],
            wall_time_s=payload["wall_time_s"],
            hparams=payload.get("hparams"),
        )


@dataclass
class Checkpoint:
    """Best-epoch model snapshot on disk: model.keras + checkpoint.json."""

    path: str
    backbone_name: str
    epoch: int
    monitored_value: Optional[float]
    monitor: str
    weights_file: str

    def load_model(self) -> "keras.Model":
        return keras.models.load_model(self.weights_file, compile=False)

    @classmethod
    def load(cls, directory) -> "Checkpoint":
        directory = Path(directory)
        meta_file = directory / "checkpoint.json"
        if not meta_file.exists():
            raise CheckpointError(f"no checkpoint at {directory}")
        meta = json.loads(meta_file.read_text(encoding="utf-8"))
        return cls(
            path=str(directory),
            backbone_name=meta["backbone"],
            epoch=meta["epoch"],
            monitored_value=meta["monitored_value"],
            monitor=meta["monitor"],
            weights_file=str(directory / "model.keras"),
        )

    @property
    def metadata(self) -> dict:
        return json.loads((Path(self.path) / "checkpoint.json").read_text(encoding="utf-8"))


def _monitor_mode(monitor: str) -> str:
    if monitor not in MONITOR_KEYS:
        raise ConfigurationError(
            f"unknown monitor {monitor!r}; expected one of {MONITOR_KEYS}"
        )
    return "min" if monitor.endswith("loss") else "max"


def early_stop_check(
    history,
    monitor: str = "val_loss",
    patience: int = 10,
    min_delta: float = 0.0,
) -> bool:
    """True iff the monitored quantity has gone `patience` consecutive
    epochs past its best without improving by more than min_delta."""
    records = history.records if isinstance(history, TrainingHistory) else list(history)
    if not records:
        raise ConfigurationError("early_stop_check requires a non-empty history")
    mode = _monitor_mode(monitor)
    values = [getattr(r, monitor) for r in records]

    best = values[0]
    since_best = 0
    for value in values[1:]:
        improved = (best - value) > min_delta if mode == "min" else (value - best) > min_delta
        if improved:
            best = value
            since_best = 0
        else:
            since_best += 1
    return since_best >= max(patience, 1)


def _reinitialize_head(handle: ModelHandle, seed: int) -> None:
    """Seeded from-scratch initialization of the trainable head layers.

    Uses explicitly seeded initializers (layer initializers capture their
    own seed at construction time) and resets per-layer random state
    (dropout masks keep a seed generator the global seed call does not
    touch), so head weights and dropout draws are functions of the training
    seed alone."""
    for index, layer in enumerate(handle.head_layers):
        if isinstance(layer, keras.layers.Dense):
            init = keras.initializers.GlorotUniform(seed=seed * 1000 + index)
            layer.kernel.assign(init(layer.kernel.shape, dtype=layer.kernel.dtype))
            layer.bias.assign(np.zeros(layer.bias.shape, dtype=layer.bias.dtype))
        generator = getattr(layer, "seed_generator", None)
        if generator is not None:
            generator.state.assign(keras.random.SeedGenerator(seed).state)


def _stream_pass(model, stream, loss_fn, optimizer=None):
    """One full pass over a stream; trains when an optimizer is given.

    Returns (mean loss, accuracy) weighted by batch size. Loss/accuracy for
    a training pass are running epoch averages, matching the convention of
    history plots from generator-based training.
    """
    total = 0
    loss_sum = 0.0
    correct = 0
    for images, labels in stream:
        x = tf.constant(images)
        y = tf.constant(labels)
        if optimizer is not None:
            with tf.GradientTape() as tape:
                probs = model(x, training=True)
                loss = loss_fn(y, probs)
            grads = tape.gradient(loss, model.trainable_weights)
            optimizer.apply_gradients(zip(grads, model.trainable_weights))
        else:
            probs = model(x, training=False)
            loss = loss_fn(y, probs)
        batch = len(images)
        total += batch
        loss_sum += float(loss) * batch
        correct += int(np.sum(np.argmax(probs, axis=1) == np.argmax(labels, axis=1)))
    return loss_sum / total, correct / total


def train(
    handle: ModelHandle,
    train_stream,
    val_stream,
    hparams: Optional[HyperParams] = None,
    seed: int = DEFAULT_SEED,
    runs_dir="runs",
) -> tuple[TrainingHistory, Checkpoint]:
    """Run the training recipe and return (history, best checkpoint).

    The seed controls head initialization, shuffling and augmentation
    draws; backbone weights are whatever the handle was built with. Raises
    DivergenceError on a non-finite loss.
    """
    hparams = hparams or HyperParams()
    es = hparams.early_stopping
    mode = _monitor_mode(es.monitor)

    keras.utils.set_random_seed(seed)
    _reinitialize_head(handle, seed)
    model = handle.model
    optimizer = keras.optimizers.Adam(hparams.learning_rate)
    loss_fn = keras.losses.CategoricalCrossentropy()

    records: list[EpochRecord] = []
    best_value: Optional[float] = None
    best_epoch = 0
    best_weights = [w.copy() for w in model.get_weights()]
    started = time.perf_counter()
    stopped_epoch = 0

    for epoch in range(1, hparams.max_epochs + 1):
        train_loss, train_acc = _stream_pass(model, train_stream, loss_fn, optimizer)
        val_loss, val_acc = _stream_pass(model, val_stream, loss_fn)

        for name, value in (("train", train_loss), ("val", val_loss)):
            if not math.isfinite(value):
                raise DivergenceError(epoch, f"{name}_loss={value}")

        record = EpochRecord(
            epoch=epoch,
            train_accuracy=train_acc,
            train_loss=train_loss,
            val_accuracy=val_acc,
            val_loss=val_loss,
        )
        records.append(record)
        stopped_epoch = epoch

        value = getattr(record, es.monitor)
        better = (
            best_value is None
            or (mode == "min" and value < best_value)
            or (mode == "max" and value > best_value)
        )
        if better:
            best_value = value
            best_epoch = epoch
            best_weights = [w.copy() for w in model.get_weights()]

        if early_stop_check(records, es.monitor, es.patience, es.min_delta):
            break

    wall_time = time.perf_counter() - started
    history = TrainingHistory(
        backbone_name=handle.spec.name,
        seed=seed,
        records=records,
        stopped_epoch=stopped_epoch,
        best_epoch=best_epoch,
        wall_time_s=wall_time,
        hparams=hparams.to_dict(),
    )

    checkpoint_dir = Path(runs_dir) / handle.spec.name / str(seed) / "best"
    checkpoint_dir.mkdir(parents=True, exist_ok=True)
    final_weights = model.get_weights()
    model.set_weights(best_weights)
    weights_file = checkpoint_dir / "model.keras"
    model.save(weights_file)
    meta = {
        "backbone": handle.spec.name,
        "seed": seed,
        "epoch": best_epoch,
        "monitored_value": best_value,
        "monitor": es.monitor,
        "head": handle.head.to_dict(),
        "num_classes": handle.num_classes,
        "input_size": handle.input_size,
        "created_at": _dt.datetime.now(_dt.timezone.utc).isoformat(),
    }
    (checkpoint_dir / "checkpoint.json").write_text(
        json.dumps(meta, indent=2), encoding="utf-8"
    )
    if not es.restore_best:
        model.set_weights(final_weights)

    checkpoint = Checkpoint(
        path=str(checkpoint_dir),
        backbone_name=handle.spec.name,
        epoch=best_epoch,
        monitored_value=best_value,
        monitor=es.monitor,
        weights_file=str(weights_file),
    )
    return history, checkpoint


@dataclass
class SweepEntry:
    backbone_name: str
    seed: int
    history: Optional[TrainingHistory] = None
    checkpoint: Optional[Checkpoint] = None
    report: Optional[object] = None  # val EvalReport
    train_report: Optional[object] = None
    error: Optional[str] = None


def run_sweep(
    backbone_names: Sequence[str],
    manifest: DatasetManifest,
    hparams: Optional[HyperParams] = None,
    seeds: Sequence[int] = (DEFAULT_SEED,),
    head: Optional[HeadSpec] = None,
    augmentation: Optional[AugmentationConfig] = None,
    runs_dir="runs",
    pretrained: bool = True,
    weights_cache=None,
    input_size: Optional[int] = None,
) -> list[SweepEntry]:
    """Train every named backbone on identical splits with the same recipe.

    Per-backbone failures (missing weights, divergence) are recorded in the
    returned entries and do not abort the sweep.
    """
    from .evaluation import evaluate  # local import to avoid a cycle

    hparams = hparams or HyperParams()
    augmentation = augmentation if augmentation is not None else AugmentationConfig()
    entries: list[SweepEntry] = []

    for name in backbone_names:
        spec = get_backbone(name)
        size = int(input_size or spec.input_size)
        preprocess = PreprocessConfig(
            target_height=size, target_width=size, batch_size=hparams.batch_size
        )
        for seed in seeds:
            entry = SweepEntry(backbone_name=name, seed=seed)
            try:
                handle = build_model(
                    spec,
                    head=head,
                    pretrained=pretrained,
                    weights_cache=weights_cache,
                    input_size=size,
                )
                train_stream = make_batches(
                    manifest, "train", preprocess, augmentation, shuffle=True, seed=seed
                )
                val_stream = make_batches(manifest, "val", preprocess, seed=seed)
                history, checkpoint = train(
                    handle, train_stream, val_stream, hparams, seed=seed, runs_dir=runs_dir
                )
                history.save(runs_dir)

                eval_train = make_batches(manifest, "train", preprocess, seed=seed)
                entry.train_report = evaluate(
                    handle, eval_train, backbone_name=name, split="train"
                )
                entry.report = evaluate(handle, val_stream, backbone_name=name, split="val")
                run_dir = Path(runs_dir) / name / str(seed)
                entry.train_report.save(run_dir / "eval_train.json")
                entry.report.save(run_dir / "eval_val.json")
                entry.history = history
                entry.checkpoint = checkpoint
            except PaddyDocError as exc:
                entry.error = str(exc)
            entries.append(entry)
            keras.backend.clear_session()
    return entries


def head_gradient_check(
    handle: ModelHandle,
    images: np.ndarray,
    labels: np.ndarray,
    num_samples: int = 5,
    rng: Optional[np.random.Generator] = None,
) -> list[dict]:
    """Compare analytic output-layer gradients against central differences.

    Runs the model in inference mode (dropout off) so the differentiated
    function is deterministic. Returns one entry per sampled kernel
    parameter with the analytic value, numeric value and relative error.
    """
    rng = rng or np.random.default_rng(0)
    model = handle.model
    dense = handle.head_layers[-1]
    kernel = dense.kernel

    compute_dtype = kernel.dtype
    x = tf.constant(np.asarray(images), dtype=compute_dtype)
    y = tf.constant(np.asarray(labels), dtype=compute_dtype)

    # inline cross-entropy in the model's own dtype: the stock loss object
    # computes in float32 and quantizes the tiny finite-difference deltas
    def loss_value():
        probs = model(x, training=False)
        eps = tf.constant(1e-12, probs.dtype)
        return -tf.reduce_mean(tf.reduce_sum(y * tf.math.log(probs + eps), axis=1))

    with tf.GradientTape() as tape:
        loss = loss_value()
    analytic = tape.gradient(loss, kernel).numpy()

    def loss_at(weights: np.ndarray) -> float:
        kernel.assign(weights)
        return float(loss_value())

    base = kernel.numpy()
    eps = np.finfo(base.dtype).eps
    results = []
    flat_indices = rng.choice(base.size, size=min(num_samples, base.size), replace=False)
    try:
        for flat in flat_indices:
            i, j = np.unravel_index(int(flat), base.shape)
            w0 = base[i, j]
            h = eps ** (1 / 3) * max(1.0, abs(float(w0)))
            plus = base.copy()
            plus[i, j] = w0 + h
            minus = base.copy()
            minus[i, j] = w0 - h
            numeric = (loss_at(plus) - loss_at(minus)) / (2 * h)
            a = float(analytic[i, j])
            rel = abs(a - numeric) / max(abs(a), abs(numeric), 1e-12)
            results.append(
                {"index": (int(i), int(j)), "analytic": a, "numeric": numeric, "rel_err": rel}
            )
    finally:
        kernel.assign(base)
    return results
