"""Backbone registry and model assembly.

Ten transfer-learning configurations are registered, each an ImageNet
feature extractor that stays frozen while a small trainable head (global
average pooling, dropout, dense softmax) learns the three disease classes.
The registry is closed: exactly these ten names resolve.
"""

from __future__ import annotations

import datetime as _dt
import hashlib
import json
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import keras
import numpy as np

from .data import NUM_CLASSES
from .errors import ConfigurationError, DependencyError, RegistryError

WEIGHTS_CACHE_ENV = "PADDYDOC_WEIGHTS_CACHE"
_WEIGHTS_BASE = "https://storage.googleapis.com/tensorflow/keras-applications"


@dataclass(frozen=True)
class BackboneSpec:
    name: str
    input_size: int
    frozen: bool = True
    pretrained_source: str = "imagenet"


@dataclass(frozen=True)
class HeadSpec:
    """Trainable classification head appended to a frozen backbone.

    The default head is global average pooling, dropout 0.1 and a single
    dense softmax. hidden_units optionally inserts a rectifier layer before
    the output.
    """

    pooling: str = "avg"
    dropout_rate: float = 0.1
    output_units: int = NUM_CLASSES
    hidden_units: Optional[int] = None
    hidden_activation: str = "relu"
    output_activation: str = "softmax"

    def __post_init__(self):
        if self.pooling != "avg":
            raise ConfigurationError(f"unsupported pooling {self.pooling!r}")
        if not (0 <= self.dropout_rate < 1):
            raise ConfigurationError("dropout_rate must be in [0, 1)")

    def to_dict(self) -> dict:
        return {
            "pooling": self.pooling,
            "dropout_rate": self.dropout_rate,
            "output_units": self.output_units,
            "hidden_units": self.hidden_units,
            "hidden_activation": self.hidden_activation,
            "output_activation": self.output_activation,
        }

    @classmethod
    def from_dict(cls, payload: dict) -> "HeadSpec":
        return cls(**payload)


# Registry rows keep the published comparison-table order. Input sizes are
# the canonical ImageNet resolutions for each architecture; "nasnet" is
# NASNet-Mobile.
_REGISTRY_ROWS = (
    ("resnet50", 224),
    ("densenet121", 224),
    ("vgg16", 224),
    ("mobilenetv2", 224),
    ("inceptionv3", 299),
    ("efficientnetb0", 224),
    ("resnet101", 224),
    ("vgg19", 224),
    ("nasnet", 224),
    ("densenet169", 224),
)

_REGISTRY = {name: BackboneSpec(name=name, input_size=size) for name, size in _REGISTRY_ROWS}

# (constructor attribute on keras.applications, published notop weight file)
_BUILDERS = {
    "resnet50": ("ResNet50", f"{_WEIGHTS_BASE}/resnet/resnet50_weights_tf_dim_ordering_tf_kernels_notop.h5"),
    "densenet121": ("DenseNet121", f"{_WEIGHTS_BASE}/densenet/densenet121_weights_tf_dim_ordering_tf_kernels_notop.h5"),
    "vgg16": ("VGG16", f"{_WEIGHTS_BASE}/vgg16/vgg16_weights_tf_dim_ordering_tf_kernels_notop.h5"),
    "mobilenetv2": ("MobileNetV2", f"{_WEIGHTS_BASE}/mobilenet_v2/mobilenet_v2_weights_tf_dim_ordering_tf_kernels_1.0_224_no_top.h5"),
    "inceptionv3": ("InceptionV3", f"{_WEIGHTS_BASE}/inception_v3/inception_v3_weights_tf_dim_ordering_tf_kernels_notop.h5"),
    "efficientnetb0": ("EfficientNetB0", f"{_WEIGHTS_BASE}/efficientnet/efficientnetb0_notop.h5"),
    "resnet101": ("ResNet101", f"{_WEIGHTS_BASE}/resnet/resnet101_weights_tf_dim_ordering_tf_kernels_notop.h5"),
    "vgg19": ("VGG19", f"{_WEIGHTS_BASE}/vgg19/vgg19_weights_tf_dim_ordering_tf_kernels_notop.h5"),
    "nasnet": ("NASNetMobile", f"{_WEIGHTS_BASE}/nasnet/NASNet-mobile-no-top.h5"),
    "densenet169": ("DenseNet169", f"{_WEIGHTS_BASE}/densenet/densenet169_weights_tf_dim_ordering_tf_kernels_notop.h5"),
}


def list_backbones() -> list[BackboneSpec]:
    """All ten registered specs, in comparison-table row order."""
    return [_REGISTRY[name] for name, _ in _REGISTRY_ROWS]


def get_backbone(name: str) -> BackboneSpec:
    try:
        return _REGISTRY[name]
    except KeyError:
        raise RegistryError(
            f"unknown backbone {name!r}; registered: {[n for n, _ in _REGISTRY_ROWS]}"
        ) from None


def weights_cache_dir(override=None) -> Path:
    if override is not None:
        return Path(override)
    env = os.environ.get(WEIGHTS_CACHE_ENV)
    if env:
        return Path(env)
    return Path.home() / ".cache" / "paddydoc" / "weights"


def _sha256(path: Path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            digest.update(chunk)
    return digest.hexdigest()


def fetch_backbone_weights(name: str, cache_dir=None, timeout: float = 600.0) -> Path:
    """Return a local path to the backbone's pretrained weights.

    Layout is <cache>/<backbone_name>/<file> plus a source.json recording
    the checkpoint origin and content hash. Downloads once; later calls
    verify the recorded hash. Raises DependencyError when the weights are
    neither cached nor fetchable.
    """
    get_backbone(name)
    _, url = _BUILDERS[name]
    target_dir = weights_cache_dir(cache_dir) / name
    target = target_dir / url.rsplit("/", 1)[-1]
    source_file = target_dir / "source.json"

    if target.exists():
        if source_file.exists():
            recorded = json.loads(source_file.read_text(encoding="utf-8"))
            if recorded.get("sha256") and recorded["sha256"] != _sha256(target):
                raise DependencyError(name, f"cached weights at {target} fail hash check")
        else:
            source_file.write_text(
                json.dumps({"url": url, "sha256": _sha256(target)}, indent=2),
                encoding="utf-8",
            )
        return target

    import requests

    target_dir.mkdir(parents=True, exist_ok=True)
    tmp = target.with_suffix(target.suffix + ".part")
    try:
        with requests.get(url, stream=True, timeout=timeout) as resp:
            resp.raise_for_status()
            with open(tmp, "wb") as fh:
                for chunk in resp.iter_content(1 << 20):
                    fh.write(chunk)
        tmp.replace(target)
    except Exception as exc:
        tmp.unlink(missing_ok=True)
        raise DependencyError(name, f"fetch failed from {url}: {exc}") from exc

    source_file.write_text(
        json.dumps(
            {
                "url": url,
                "sha256": _sha256(target),
                "size_bytes": target.stat().st_size,
                "fetched_at": _dt.datetime.now(_dt.timezone.utc).isoformat(),
            },
            indent=2,
        ),
        encoding="utf-8",
    )
    return target


@dataclass
class ModelHandle:
    """A built classifier: frozen feature extractor plus trainable head."""

    model: "keras.Model"
    backbone: "keras.Model"
    spec: BackboneSpec
    head: HeadSpec
    num_classes: int
    head_layers: list = field(default_factory=list)

    @property
    def input_size(self) -> int:
        return int(self.model.input_shape[1])

    def predict_proba(self, x: np.ndarray) -> np.ndarray:
        return np.asarray(self.model(np.asarray(x, dtype=np.float32), training=False))


def attach_head(
    backbone_model: "keras.Model",
    head: HeadSpec,
    num_classes: int,
    input_size: int,
    spec: Optional[BackboneSpec] = None,
) -> ModelHandle:
    """Wire the classification head onto a (frozen) feature extractor.

    The backbone is always called in inference mode so its batch-norm
    statistics stay fixed; only the head layers are trainable.
    """
    if num_classes < 2:
        raise ConfigurationError("num_classes must be >= 2")
    inputs = keras.Input(shape=(input_size, input_size, 3), name="image")
    features = backbone_model(inputs, training=False)

    head_layers = [
        keras.layers.GlobalAveragePooling2D(name="head_pool"),
        keras.layers.Dropout(head.dropout_rate, name="head_dropout"),
    ]
    if head.hidden_units:
        head_layers.append(
            keras.layers.Dense(
                head.hidden_units, activation=head.hidden_activation, name="head_hidden"
            )
        )
    head_layers.append(
        keras.layers.Dense(num_classes, activation=head.output_activation, name="head_output")
    )

    x = features
    for layer in head_layers:
        x = layer(x)
    model = keras.Model(inputs, x, name=f"{backbone_model.name}_classifier")

    if spec is None:
        spec = BackboneSpec(
            name=backbone_model.name,
            input_size=input_size,
            frozen=not backbone_model.trainable,
            pretrained_source="none",
        )
    return ModelHandle(
        model=model,
        backbone=backbone_model,
        spec=spec,
        head=head,
        num_classes=num_classes,
        head_layers=head_layers,
    )


def build_model(
    spec,
    head: Optional[HeadSpec] = None,
    num_classes: int = NUM_CLASSES,
    pretrained: bool = True,
    weights_cache=None,
    input_size: Optional[int] = None,
) -> ModelHandle:
    """Assemble one registered backbone with the classification head.

    pretrained=False builds the same graph with randomly initialized
    backbone weights (no fetch); useful for offline smoke tests and
    benchmarks, not for reproducing the published accuracy numbers.
    input_size overrides the spec's canonical resolution (pretrained
    weights are resolution-independent for these architectures).
    """
    if isinstance(spec, str):
        spec = get_backbone(spec)
    elif spec.name not in _REGISTRY:
        raise RegistryError(f"unknown backbone {spec.name!r}")
    head = head or HeadSpec()

    weights_path = None
    if pretrained:
        weights_path = str(fetch_backbone_weights(spec.name, cache_dir=weights_cache))

    size = int(input_size or spec.input_size)
    builder_name, _ = _BUILDERS[spec.name]
    builder = getattr(keras.applications, builder_name)
    backbone = builder(
        include_top=False,
        weights=weights_path,
        input_shape=(size, size, 3),
    )
    backbone.trainable = not spec.frozen

    return attach_head(backbone, head, num_classes, size, spec=spec)


def count_parameters(model_or_handle) -> dict:
    """Exact parameter tallies by trainability."""
    model = model_or_handle.model if isinstance(model_or_handle, ModelHandle) else model_or_handle
    trainable = int(sum(np.prod(w.shape) for w in model.trainable_weights))
    frozen = int(sum(np.prod(w.shape) for w in model.non_trainable_weights))
    return {"trainable": trainable, "frozen": frozen}
