import os

os.environ.setdefault("TF_CPP_MIN_LOG_LEVEL", "2")

import numpy as np
import pytest
from PIL import Image

from paddydoc.data import (
    PreprocessConfig,
    assign_splits,
    scan_dataset,
)

# folder names mirror the corpus layout this suite targets; the scanner
# normalizes them onto the canonical class names
FOLDER_NAMES = {
    "bacteria": "Bacterial leaf blight",
    "brown": "Brown spot",
    "smut": "Leaf smut",
}
CLASS_COLORS = {
    "bacteria": (205, 60, 50),
    "brown": (150, 105, 40),
    "smut": (60, 60, 190),
}
IMAGE_SIZE = 64


def make_leaf_image(rng, color, size=IMAGE_SIZE):
    """Class-colored noisy image with a dark blotch, stand-in for a leaf photo."""
    img = np.ones((size, size, 3), dtype=np.float64) * color
    img += rng.normal(0, 12.0, img.shape)
    cy, cx = rng.integers(10, size - 10, size=2)
    radius = int(rng.integers(4, 10))
    yy, xx = np.ogrid[:size, :size]
    img[(yy - cy) ** 2 + (xx - cx) ** 2 < radius**2] *= 0.55
    return np.clip(img, 0, 255).astype(np.uint8)


def write_corpus(root, per_class=40, size=IMAGE_SIZE, seed=7, fmt="jpeg"):
    rng = np.random.default_rng(seed)
    for class_name, folder in FOLDER_NAMES.items():
        directory = root / folder
        directory.mkdir(parents=True)
        for i in range(per_class):
            img = make_leaf_image(rng, CLASS_COLORS[class_name], size=size)
            suffix = "jpg" if fmt == "jpeg" else fmt
            Image.fromarray(img).save(directory / f"{class_name}_{i:03d}.{suffix}", quality=92)
    return root


@pytest.fixture(scope="session")
def corpus_root(tmp_path_factory):
    """Synthetic corpus with the reference shape: 3 classes x 40 JPGs."""
    return write_corpus(tmp_path_factory.mktemp("corpus"))


@pytest.fixture(scope="session")
def manifest120(corpus_root):
    manifest = scan_dataset(corpus_root)
    return assign_splits(manifest, val_fraction=0.25, test_fraction=0.0, seed=42)


@pytest.fixture(scope="session")
def preprocess64():
    return PreprocessConfig(target_height=IMAGE_SIZE, target_width=IMAGE_SIZE, batch_size=16)


def make_toy_backbone(input_size=IMAGE_SIZE, seed=0, width=128):
    """Small frozen conv stem with nondegenerate random features.

    Randomly initialized deep pretrained architectures attenuate constant
    inputs to ~0 through stacked normalization, so offline tests that need
    actual learning attach the standard head to this stem instead.
    """
    import keras

    init = keras.initializers.VarianceScaling(scale=8.0, seed=seed)
    inputs = keras.Input(shape=(input_size, input_size, 3))
    x = keras.layers.Conv2D(
        32, 5, strides=4, padding="same", activation="relu", kernel_initializer=init
    )(inputs)
    x = keras.layers.Conv2D(
        width, 3, strides=2, padding="same", activation="relu", kernel_initializer=init
    )(x)
    model = keras.Model(inputs, x, name="toy_stem")
    model.trainable = False
    return model


def make_toy_handle(input_size=IMAGE_SIZE, seed=0, dropout=0.1):
    from paddydoc.backbones import HeadSpec, attach_head

    backbone = make_toy_backbone(input_size=input_size, seed=seed)
    return attach_head(backbone, HeadSpec(dropout_rate=dropout), 3, input_size)


@pytest.fixture(scope="session")
def trained_run(manifest120, preprocess64, tmp_path_factory):
    """One toy model trained on the synthetic corpus; shared downstream."""
    from paddydoc.data import AugmentationConfig, make_batches
    from paddydoc.evaluation import evaluate
    from paddydoc.training import EarlyStoppingConfig, HyperParams, train

    runs_dir = tmp_path_factory.mktemp("runs")
    handle = make_toy_handle()
    hparams = HyperParams(
        batch_size=16,
        max_epochs=15,
        early_stopping=EarlyStoppingConfig(patience=15),
    )
    train_stream = make_batches(
        manifest120, "train", preprocess64, AugmentationConfig(), shuffle=True, seed=42
    )
    val_stream = make_batches(manifest120, "val", preprocess64, seed=42)
    history, checkpoint = train(
        handle, train_stream, val_stream, hparams, seed=42, runs_dir=runs_dir
    )
    eval_train = make_batches(manifest120, "train", preprocess64, seed=42)
    eval_val = make_batches(manifest120, "val", preprocess64, seed=42)
    train_report = evaluate(handle, eval_train, backbone_name="toy_stem", split="train")
    val_report = evaluate(handle, eval_val, backbone_name="toy_stem", split="val")
    return {
        "handle": handle,
        "history": history,
        "checkpoint": checkpoint,
        "runs_dir": runs_dir,
        "train_report": train_report,
        "val_report": val_report,
    }


@pytest.fixture(scope="session")
def artifact_dir(trained_run, tmp_path_factory):
    from paddydoc.inference import export_model

    out = tmp_path_factory.mktemp("artifact") / "model"
    export_model(
        trained_run["checkpoint"],
        out,
        metrics={
            "train_accuracy": trained_run["train_report"].accuracy,
            "val_accuracy": trained_run["val_report"].accuracy,
        },
    )
    return out


@pytest.fixture(scope="session")
def predictor(artifact_dir):
    from paddydoc.inference import load_artifact

    return load_artifact(artifact_dir)


@pytest.fixture(scope="session")
def brown_image_bytes(corpus_root):
    path = sorted((corpus_root / FOLDER_NAMES["brown"]).glob("*.jpg"))[0]
    return path.read_bytes()


@pytest.fixture(scope="session")
def fixture_images_bytes(corpus_root):
    """Ten assorted images from the corpus as encoded bytes."""
    paths = []
    for folder in FOLDER_NAMES.values():
        paths.extend(sorted((corpus_root / folder).glob("*.jpg"))[:4])
    return [p.read_bytes() for p in paths[:10]]
