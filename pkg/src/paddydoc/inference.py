"""Portable model artifacts and the inference predictor.

An artifact is a directory holding an opaque serialized model blob
(weights.bin) and a metadata.json manifest. The metadata, not the caller,
supplies the preprocessing parameters, so any loaded artifact classifies
images exactly the way its training pipeline did.
"""

from __future__ import annotations

import datetime as _dt
import hashlib
import io
import json
import shutil
import tempfile
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np
from PIL import Image

from .data import CLASS_TO_INDEX, PreprocessConfig, preprocess_array
from .errors import (
    ArtifactIntegrityError,
    ArtifactNotFoundError,
    ArtifactVersionError,
    ImageDecodeError,
    MetadataValidationError,
)
from .training import Checkpoint

ARTIFACT_SCHEMA_VERSION = 1
WEIGHTS_BLOB = "weights.bin"
METADATA_FILE = "metadata.json"
DEFAULT_CONFIDENCE_FLOOR = 0.50

_REQUIRED_METADATA = (
    "schema_version",
    "backbone_name",
    "class_map",
    "input_size",
    "rescale",
    "created_at",
    "metrics",
    "content_hash",
)


def _sha256_bytes(path: Path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            digest.update(chunk)
    return digest.hexdigest()


@dataclass
class ModelArtifact:
    directory: str
    metadata: dict

    @property
    def weights_path(self) -> Path:
        return Path(self.directory) / WEIGHTS_BLOB

    @property
    def content_hash(self) -> str:
        return self.metadata["content_hash"]


def export_model(
    checkpoint,
    out_dir,
    metrics: Optional[dict] = None,
    rescale: float = 1.0 / 255.0,
) -> ModelArtifact:
    """Write a checkpoint as a self-describing artifact directory.

    The weights blob is a byte-for-byte copy of the checkpoint's serialized
    model, so exporting the same checkpoint twice yields the same
    content_hash.
    """
    if isinstance(checkpoint, (str, Path)):
        checkpoint = Checkpoint.load(checkpoint)
    source = Path(checkpoint.weights_file)
    if not source.exists():
        raise ArtifactNotFoundError(f"checkpoint model file missing: {source}")

    meta = checkpoint.metadata
    metrics = dict(metrics or {})
    metrics.setdefault("train_accuracy", None)
    metrics.setdefault("val_accuracy", None)

    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    blob = out_dir / WEIGHTS_BLOB
    shutil.copyfile(source, blob)

    metadata = {
        "schema_version": ARTIFACT_SCHEMA_VERSION,
        "backbone_name": checkpoint.backbone_name,
        "class_map": dict(CLASS_TO_INDEX),
        "input_size": int(meta["input_size"]),
        "rescale": rescale,
        "created_at": _dt.datetime.now(_dt.timezone.utc).isoformat(),
        "metrics": metrics,
        "content_hash": _sha256_bytes(blob),
    }
    (out_dir / METADATA_FILE).write_text(json.dumps(metadata, indent=2), encoding="utf-8")
    return ModelArtifact(directory=str(out_dir), metadata=metadata)


@dataclass
class Prediction:
    label: str
    class_index: int
    probabilities: list
    top1_confidence: float
    latency_ms: float
    uncertain: bool

    def to_dict(self) -> dict:
        return {
            "label": self.label,
            "class_index": self.class_index,
            "probabilities": self.probabilities,
            "top1_confidence": self.top1_confidence,
            "latency_ms": self.latency_ms,
            "uncertain": self.uncertain,
        }


class Predictor:
    """A loaded artifact ready for concurrent read-only inference."""

    def __init__(self, model, metadata: dict, confidence_floor: float = DEFAULT_CONFIDENCE_FLOOR):
        self.model = model
        self.metadata = metadata
        self.confidence_floor = confidence_floor
        self.class_map = dict(metadata["class_map"])
        self.class_names = [
            name for name, _ in sorted(self.class_map.items(), key=lambda kv: kv[1])
        ]
        self._preprocess = PreprocessConfig(
            rescale=metadata["rescale"],
            target_height=metadata["input_size"],
            target_width=metadata["input_size"],
            batch_size=1,
        )

    def _predict_array(self, image: np.ndarray) -> Prediction:
        started = time.perf_counter()
        tensor = preprocess_array(image, self._preprocess)
        probs = np.asarray(self.model(tensor[None, ...], training=False), dtype=np.float64)[0]
        latency_ms = (time.perf_counter() - started) * 1000.0
        index = int(np.argmax(probs))  # argmax resolves exact ties to the lowest index
        top1 = float(probs[index])
        return Prediction(
            label=self.class_names[index],
            class_index=index,
            probabilities=[float(p) for p in probs],
            top1_confidence=top1,
            latency_ms=latency_ms,
            uncertain=top1 < self.confidence_floor,
        )

    def predict(self, image_bytes: bytes) -> Prediction:
        """Classify one encoded image (JPEG/PNG bytes)."""
        try:
            with Image.open(io.BytesIO(image_bytes)) as img:
                array = np.asarray(img.convert("RGB"), dtype=np.uint8)
        except Exception as exc:
            raise ImageDecodeError("<bytes>", str(exc)) from exc
        return self._predict_array(array)

    def predict_frame(self, frame_bytes: bytes) -> Prediction:
        """Classify one captured video frame.

        Same pipeline as predict(); kept as a separate entry point so the
        serving layer can rate-limit and tag streaming traffic.
        """
        return self.predict(frame_bytes)


def load_artifact(directory, confidence_floor: float = DEFAULT_CONFIDENCE_FLOOR) -> Predictor:
    """Load and verify an artifact directory, returning a Predictor."""
    directory = Path(directory)
    blob = directory / WEIGHTS_BLOB
    meta_path = directory / METADATA_FILE
    if not directory.is_dir() or not blob.exists() or not meta_path.exists():
        raise ArtifactNotFoundError(
            f"artifact at {directory} is missing {WEIGHTS_BLOB} or {METADATA_FILE}"
        )

    metadata = json.loads(meta_path.read_text(encoding="utf-8"))
    missing = [key for key in _REQUIRED_METADATA if key not in metadata]
    if missing:
        raise MetadataValidationError(f"artifact metadata missing keys: {missing}")
    if metadata["schema_version"] != ARTIFACT_SCHEMA_VERSION:
        raise ArtifactVersionError(
            f"unsupported artifact schema_version {metadata['schema_version']!r}"
        )
    actual = _sha256_bytes(blob)
    if actual != metadata["content_hash"]:
        raise ArtifactIntegrityError(
            f"weights blob hash {actual} does not match recorded {metadata['content_hash']}"
        )

    import keras

    # the blob is opaque by contract; give the loader the suffix it expects
    with tempfile.TemporaryDirectory() as tmp:
        link = Path(tmp) / "model.keras"
        try:
            link.symlink_to(blob.resolve())
        except OSError:
            shutil.copyfile(blob, link)
        model = keras.models.load_model(link, compile=False)
    return Predictor(model, metadata, confidence_floor=confidence_floor)


def predict(predictor: Predictor, image_bytes: bytes) -> Prediction:
    return predictor.predict(image_bytes)


def predict_frame(predictor: Predictor, frame_bytes: bytes) -> Prediction:
    return predictor.predict_frame(frame_bytes)
