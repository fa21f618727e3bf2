"""paddydoc: rice leaf disease classification suite.

Dataset ingestion and augmentation, a ten-backbone transfer-learning
benchmark harness, model export, and an HTTP prediction service with
per-disease recommendations.

Submodules with a TensorFlow dependency (backbones, training, evaluation,
inference, service) are intentionally not imported here so that dataset and
CLI help paths stay fast.
"""

__version__ = "0.1.0"

from .data import (  # noqa: F401
    CLASS_NAMES,
    CLASS_TO_INDEX,
    AugmentationConfig,
    DatasetManifest,
    ImageRecord,
    PreprocessConfig,
    assign_splits,
    augment,
    load_and_rescale,
    make_batches,
    scan_dataset,
)
from .errors import PaddyDocError  # noqa: F401
