"""Dataset ingestion, deterministic splits, preprocessing, and batch streams.

The corpus layout is one folder per disease class under a root directory.
Class folders are matched case-insensitively onto the canonical names
(bacteria, brown, smut) so that "Bacterial leaf blight", "Brown spot" and
"Leaf smut" all resolve. The class index map is fixed:
bacteria -> 0, brown -> 1, smut -> 2.
"""

from __future__ import annotations

import json
import logging
import math
import os
import warnings
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterator, Optional, Sequence

import numpy as np
from PIL import Image

from . import kernels
from .errors import (
    ConfigurationError,
    DatasetNotFoundError,
    DatasetStructureError,
    ImageDecodeError,
    SplitError,
    StreamError,
)

logger = logging.getLogger(__name__)

CLASS_NAMES = ("bacteria", "brown", "smut")
CLASS_TO_INDEX = {"bacteria": 0, "brown": 1, "smut": 2}
INDEX_TO_CLASS = {i: name for name, i in CLASS_TO_INDEX.items()}
NUM_CLASSES = len(CLASS_NAMES)

SPLITS = ("train", "val", "test")
IMAGE_EXTENSIONS = (".jpg", ".jpeg", ".png")
MANIFEST_SCHEMA_VERSION = 1
DEFAULT_SEED = 42


@dataclass
class ImageRecord:
    path: str
    class_name: str
    class_index: int
    split: Optional[str] = None

    def to_dict(self) -> dict:
        return {
            "path": self.path,
            "class_name": self.class_name,
            "class_index": self.class_index,
            "split": self.split,
        }


@dataclass
class PreprocessConfig:
    """Pixel rescaling and geometry for every split."""

    rescale: float = 1.0 / 255.0
    target_height: int = 224
    target_width: int = 224
    batch_size: int = 128

    def __post_init__(self):
        if self.rescale <= 0:
            raise ConfigurationError("rescale must be > 0")
        if self.target_height < 32 or self.target_width < 32:
            raise ConfigurationError("target dimensions must be >= 32")
        if self.batch_size < 1:
            raise ConfigurationError("batch_size must be >= 1")


@dataclass
class AugmentationConfig:
    """Training-set augmentation: horizontal flip, zoom, shear.

    With enabled=False the augment step is the identity on its input.
    """

    horizontal_flip: bool = True
    zoom_range: float = 0.2
    shear_range: float = 0.2
    enabled: bool = True

    def __post_init__(self):
        if not (0 <= self.zoom_range < 1):
            raise ConfigurationError("zoom_range must be in [0, 1)")
        if not (0 <= self.shear_range < 1):
            raise ConfigurationError("shear_range must be in [0, 1)")


@dataclass
class DatasetManifest:
    records: list[ImageRecord]
    root: str
    seed: Optional[int] = None
    rejects: list[dict] = field(default_factory=list)

    @property
    def counts(self) -> dict:
        """Per-class, per-split record tallies."""
        tally = {
            name: {"train": 0, "val": 0, "test": 0, "unassigned": 0, "total": 0}
            for name in CLASS_NAMES
        }
        for rec in self.records:
            bucket = rec.split if rec.split in SPLITS else "unassigned"
            tally[rec.class_name][bucket] += 1
            tally[rec.class_name]["total"] += 1
        return tally

    def split_records(self, split: str) -> list[ImageRecord]:
        if split not in SPLITS:
            raise ConfigurationError(f"unknown split {split!r}, expected one of {SPLITS}")
        return [r for r in self.records if r.split == split]

    def to_dict(self) -> dict:
        return {
            "schema_version": MANIFEST_SCHEMA_VERSION,
            "root": self.root,
            "seed": self.seed,
            "classes": dict(CLASS_TO_INDEX),
            "records": [r.to_dict() for r in self.records],
            "rejects": list(self.rejects),
        }

    def save(self, path) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(json.dumps(self.to_dict(), indent=2), encoding="utf-8")
        return path

    @classmethod
    def load(cls, path) -> "DatasetManifest":
        path = Path(path)
        if not path.exists():
            raise DatasetNotFoundError(f"manifest not found: {path}")
        payload = json.loads(path.read_text(encoding="utf-8"))
        if payload.get("schema_version") != MANIFEST_SCHEMA_VERSION:
            raise ConfigurationError(
                f"unsupported manifest schema_version {payload.get('schema_version')!r}"
            )
        if payload.get("classes") != dict(CLASS_TO_INDEX):
            raise ConfigurationError("manifest class map does not match the fixed class map")
        records = [
            ImageRecord(
                path=r["path"],
                class_name=r["class_name"],
                class_index=r["class_index"],
                split=r.get("split"),
            )
            for r in payload["records"]
        ]
        return cls(
            records=records,
            root=payload["root"],
            seed=payload.get("seed"),
            rejects=list(payload.get("rejects", [])),
        )


def normalize_class_folder(folder_name: str) -> Optional[str]:
    """Map a corpus folder name onto a canonical class name, or None.

    Prefix match first ("Bacterial leaf blight" -> bacteria), then substring
    ("Leaf smut" -> smut). Folders matching several classes are ambiguous.
    """
    lowered = folder_name.strip().lower()
    for name in CLASS_NAMES:
        if lowered.startswith(name):
            return name
    hits = [name for name in CLASS_NAMES if name in lowered]
    if len(hits) > 1:
        raise DatasetStructureError(
            f"folder {folder_name!r} matches multiple classes: {hits}"
        )
    return hits[0] if hits else None


def decode_image(path) -> np.ndarray:
    """Decode an image file to an (H, W, 3) uint8 RGB array."""
    try:
        with Image.open(path) as img:
            return np.asarray(img.convert("RGB"), dtype=np.uint8)
    except ImageDecodeError:
        raise
    except Exception as exc:
        raise ImageDecodeError(path, str(exc)) from exc


def scan_dataset(root) -> DatasetManifest:
    """Walk a class-per-folder corpus and build a manifest (splits unassigned).

    Undecodable files are excluded and listed in the manifest's rejects;
    unrecognized folders are skipped and listed there too.
    """
    root = Path(root)
    if not root.is_dir():
        raise DatasetNotFoundError(f"dataset root not found: {root}")

    records: list[ImageRecord] = []
    rejects: list[dict] = []
    seen_classes: dict[str, str] = {}
    for folder in sorted(p for p in root.iterdir() if p.is_dir()):
        class_name = normalize_class_folder(folder.name)
        if class_name is None:
            rejects.append({"path": str(folder), "reason": "unrecognized class folder"})
            logger.warning("skipping unrecognized class folder %s", folder)
            continue
        if class_name in seen_classes:
            raise DatasetStructureError(
                f"folders {seen_classes[class_name]!r} and {folder.name!r} "
                f"both map to class {class_name!r}"
            )
        seen_classes[class_name] = folder.name
        for file in sorted(folder.iterdir()):
            if not file.is_file() or file.suffix.lower() not in IMAGE_EXTENSIONS:
                continue
            try:
                decode_image(file)
            except ImageDecodeError as exc:
                rejects.append({"path": str(file), "reason": exc.reason})
                logger.warning("rejecting undecodable image %s (%s)", file, exc.reason)
                continue
            records.append(
                ImageRecord(
                    path=str(file.resolve()),
                    class_name=class_name,
                    class_index=CLASS_TO_INDEX[class_name],
                )
            )

    if not seen_classes:
        raise DatasetStructureError(
            f"no recognizable class folders under {root} "
            f"(expected folders matching {CLASS_NAMES})"
        )
    records.sort(key=lambda r: (r.class_index, r.path))
    return DatasetManifest(records=records, root=str(root.resolve()), rejects=rejects)


def assign_splits(
    manifest: DatasetManifest,
    val_fraction: float,
    test_fraction: float = 0.0,
    seed: int = DEFAULT_SEED,
) -> DatasetManifest:
    """Stratified, seeded train/val/test assignment.

    Deterministic: the same (records, fractions, seed) always produce the
    same record-to-split mapping, independent of scan order.
    """
    if val_fraction < 0 or test_fraction < 0:
        raise SplitError("split fractions must be >= 0")
    if val_fraction + test_fraction >= 1:
        raise SplitError("val_fraction + test_fraction must be < 1")

    by_class: dict[str, list[ImageRecord]] = {name: [] for name in CLASS_NAMES}
    for rec in manifest.records:
        by_class[rec.class_name].append(rec)

    rng = np.random.default_rng(seed)
    new_records: list[ImageRecord] = []
    for name in CLASS_NAMES:
        recs = sorted(by_class[name], key=lambda r: r.path)
        if not recs:
            continue
        n = len(recs)
        n_val = int(round(n * val_fraction))
        n_test = int(round(n * test_fraction))
        if n - n_val - n_test < 1:
            raise SplitError(
                f"class {name!r} has {n} records; fractions leave no training data"
            )
        perm = rng.permutation(n)
        assignment = ["train"] * n
        for i in perm[:n_val]:
            assignment[i] = "val"
        for i in perm[n_val : n_val + n_test]:
            assignment[i] = "test"
        for rec, split in zip(recs, assignment):
            new_records.append(replace(rec, split=split))

    new_records.sort(key=lambda r: (r.class_index, r.path))
    return DatasetManifest(
        records=new_records,
        root=manifest.root,
        seed=seed,
        rejects=list(manifest.rejects),
    )


def preprocess_array(image: np.ndarray, config: PreprocessConfig) -> np.ndarray:
    """Resize a decoded RGB array and rescale pixel values.

    This is the single preprocessing path shared by training batches and
    the inference predictor, so both produce bitwise-identical tensors.
    """
    arr = np.asarray(image, dtype=np.float32)
    resized = kernels.bilinear_resize(arr, config.target_height, config.target_width)
    return resized * np.float32(config.rescale)


def load_and_rescale(record_or_path, config: PreprocessConfig) -> np.ndarray:
    """Decode, bilinear-resize and rescale one image to a float32 tensor."""
    path = record_or_path.path if isinstance(record_or_path, ImageRecord) else record_or_path
    return preprocess_array(decode_image(path), config)


def one_hot(class_index: int, num_classes: int = NUM_CLASSES) -> np.ndarray:
    vec = np.zeros(num_classes, dtype=np.float32)
    vec[class_index] = 1.0
    return vec


def _zoom_shear_matrix(zoom: float, shear: float) -> tuple[float, float, float, float]:
    """Sampling matrix for zoom-about-center followed by an x-shear.

    Zoom factor z > 1 magnifies; the shear draw is an angle in radians whose
    tangent displaces sampling columns proportionally to the row offset.
    """
    inv = 1.0 / zoom
    return inv, 0.0, math.tan(shear) * inv, inv


def augment(
    tensor: np.ndarray,
    config: AugmentationConfig,
    rng: np.random.Generator,
) -> np.ndarray:
    """Randomized flip/zoom/shear of a [0,1] image tensor.

    Draw order is fixed: flip decision (probability 0.5, only when
    horizontal_flip is set), zoom factor uniform in [1-zoom_range,
    1+zoom_range], shear angle uniform in [-shear_range, +shear_range].
    Zoom and shear compose into a single resampling pass. Output is clipped
    to [0,1] and keeps the input shape.
    """
    if not config.enabled:
        return tensor

    out = tensor
    if config.horizontal_flip and rng.random() < 0.5:
        out = np.ascontiguousarray(out[:, ::-1, :])

    zoom = float(rng.uniform(1.0 - config.zoom_range, 1.0 + config.zoom_range)) if config.zoom_range > 0 else 1.0
    shear = float(rng.uniform(-config.shear_range, config.shear_range)) if config.shear_range > 0 else 0.0

    if zoom != 1.0 or shear != 0.0:
        m00, m01, m10, m11 = _zoom_shear_matrix(zoom, shear)
        out = kernels.affine_warp(out, m00, m01, m10, m11)
        np.clip(out, 0.0, 1.0, out=out)
    return out


class BatchStream:
    """Deterministic epoch-wise stream of (images, one-hot labels) batches.

    Each iteration over the stream is one epoch: every record appears
    exactly once. Shuffling and augmentation draws are seeded per epoch, so
    a freshly constructed stream always replays the same sequence of
    epochs. Decoded base tensors are cached in memory across epochs.
    """

    def __init__(
        self,
        records: Sequence[ImageRecord],
        split: str,
        preprocess: PreprocessConfig,
        augmentation: Optional[AugmentationConfig] = None,
        shuffle: bool = False,
        seed: int = DEFAULT_SEED,
    ):
        if not records:
            raise StreamError(f"split {split!r} has no records")
        if augmentation is not None and augmentation.enabled and split != "train":
            raise ConfigurationError("augmentation is only applied to the train split")
        self.records = list(records)
        self.split = split
        self.preprocess = preprocess
        self.augmentation = augmentation
        self.shuffle = shuffle
        self.seed = seed
        self.n_samples = len(self.records)
        self.batch_size = preprocess.batch_size
        if self.batch_size > self.n_samples:
            warnings.warn(
                f"batch_size {self.batch_size} exceeds split size "
                f"{self.n_samples}; clamping",
                stacklevel=2,
            )
            self.batch_size = self.n_samples
        self._epoch = 0
        self._cache: dict[str, np.ndarray] = {}

    def __len__(self) -> int:
        return math.ceil(self.n_samples / self.batch_size)

    @property
    def num_classes(self) -> int:
        return NUM_CLASSES

    def _base_tensor(self, record: ImageRecord) -> np.ndarray:
        cached = self._cache.get(record.path)
        if cached is None:
            cached = load_and_rescale(record, self.preprocess)
            self._cache[record.path] = cached
        return cached

    def __iter__(self) -> Iterator[tuple[np.ndarray, np.ndarray]]:
        epoch = self._epoch
        self._epoch += 1

        order = np.arange(self.n_samples)
        if self.shuffle:
            order = np.random.default_rng((self.seed, epoch)).permutation(self.n_samples)

        augmenting = (
            self.augmentation is not None
            and self.augmentation.enabled
            and self.split == "train"
        )
        for start in range(0, self.n_samples, self.batch_size):
            idx = order[start : start + self.batch_size]
            images = []
            labels = []
            for pos, i in enumerate(idx, start=start):
                rec = self.records[int(i)]
                img = self._base_tensor(rec)
                if augmenting:
                    rng = np.random.default_rng((self.seed, epoch, pos))
                    img = augment(img, self.augmentation, rng)
                images.append(img)
                labels.append(one_hot(rec.class_index))
            yield np.stack(images), np.stack(labels)


def make_batches(
    manifest: DatasetManifest,
    split: str,
    preprocess: PreprocessConfig,
    augmentation: Optional[AugmentationConfig] = None,
    shuffle: bool = False,
    seed: int = DEFAULT_SEED,
) -> BatchStream:
    """Build the batch stream for one split of a split-assigned manifest."""
    return BatchStream(
        manifest.split_records(split),
        split=split,
        preprocess=preprocess,
        augmentation=augmentation,
        shuffle=shuffle,
        seed=seed,
    )
