"""Exception and warning types shared across the package."""


class PromptSegError(Exception):
    """Base class for all package errors."""


class MalformedScanError(PromptSegError):
    """Scan file cannot be decoded (bad size, empty file)."""


class CorruptDataError(PromptSegError):
    """Decoded values are not finite."""


class LabelMismatchError(PromptSegError):
    """Label record count does not match the paired scan."""


class TaxonomyError(PromptSegError):
    """Taxonomy definition violates its invariants."""


class ManifestError(PromptSegError):
    """Dataset manifest is malformed or violates split rules."""


class GridOverflowError(PromptSegError):
    """A point quantizes outside the representable voxel grid."""


class ShapeError(PromptSegError):
    """Operation received tensors with incompatible shapes."""


class PartitionError(PromptSegError):
    """Patch boundaries do not partition the serialized sequence."""


class UnknownConditionError(PromptSegError):
    """A condition tag is not configured on the model."""


class EmbeddingFormatError(PromptSegError):
    """Embedding table file violates the container format."""


class ConfigError(PromptSegError):
    """Run configuration is invalid (usage error, exit code 2 at the CLI)."""


class ScheduleExhaustedError(PromptSegError):
    """Learning-rate schedule queried past its final step."""


class OptimizerAbortError(PromptSegError):
    """Optimizer refused a step (non-finite gradient)."""


class EmptyDatasetError(PromptSegError):
    """No usable training entries."""


class MissingLabelsError(PromptSegError):
    """Operation requires a labeled scan."""


class AllPointsIgnoredWarning(UserWarning):
    """Every point in a loss batch carried the ignore index."""
