"""Exception hierarchy. Everything raised on a domain contract violation
derives from PaddyDocError so the CLI can map failures to exit code 1."""


class PaddyDocError(Exception):
    """Base class for all domain errors."""


class DatasetNotFoundError(PaddyDocError):
    """Dataset root directory does not exist."""


class DatasetStructureError(PaddyDocError):
    """Dataset root contains no recognizable class folders."""


class SplitError(PaddyDocError):
    """Requested split fractions leave a class without training records."""


class ImageDecodeError(PaddyDocError):
    """An image file could not be decoded. Carries the offending path."""

    def __init__(self, path, reason=""):
        self.path = str(path)
        self.reason = reason
        super().__init__(f"cannot decode image {self.path}: {reason}")


class StreamError(PaddyDocError):
    """A batch stream was requested over an empty split."""


class RegistryError(PaddyDocError):
    """Unknown backbone name; the registry is closed."""


class DependencyError(PaddyDocError):
    """Pretrained weights for a backbone are not available and cannot be
    fetched. Carries the backbone name."""

    def __init__(self, backbone_name, reason=""):
        self.backbone_name = backbone_name
        super().__init__(
            f"pretrained weights unavailable for backbone '{backbone_name}'"
            + (f": {reason}" if reason else "")
        )


class ConfigurationError(PaddyDocError):
    """Invalid configuration value (unknown monitor key, render format, ...)."""


class DivergenceError(PaddyDocError):
    """Training produced a non-finite loss. Carries the epoch."""

    def __init__(self, epoch, value):
        self.epoch = epoch
        self.value = value
        super().__init__(f"non-finite loss {value!r} at epoch {epoch}")


class CheckpointError(PaddyDocError):
    """Checkpoint directory is missing or unreadable."""


class EvaluationError(PaddyDocError):
    """Evaluation was requested over an empty stream."""


class ComparisonError(PaddyDocError):
    """A backbone is missing one of the paired train/val reports."""


class PlotError(PaddyDocError):
    """Plotting was requested for an empty history."""


class ArtifactError(PaddyDocError):
    """Base class for exported-model artifact problems."""


class ArtifactNotFoundError(ArtifactError):
    """Artifact directory or one of its required files is missing."""


class ArtifactIntegrityError(ArtifactError):
    """Weights blob does not match the recorded content hash."""


class ArtifactVersionError(ArtifactError):
    """Artifact metadata declares an unsupported schema version."""


class MetadataValidationError(ArtifactError):
    """Artifact metadata is incomplete or malformed."""


class CatalogError(PaddyDocError):
    """Recommendation lookup for a class outside the catalog."""


class CatalogValidationError(PaddyDocError):
    """Recommendation catalog fails coverage or uniqueness validation."""
