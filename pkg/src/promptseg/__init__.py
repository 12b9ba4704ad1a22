"""Platform-conditioned point cloud segmentation at desk-testable scale."""

from .data import (
    DEFAULT_IGNORE_INDEX,
    NUM_CLASSES,
    SUPERCLASS_NAMES,
    ClassTaxonomy,
    ConditionTag,
    PointScan,
)
from .network import PTv3Lite, PTv3LiteConfig

__version__ = "0.1.0"

__all__ = [
    "DEFAULT_IGNORE_INDEX",
    "NUM_CLASSES",
    "SUPERCLASS_NAMES",
    "ClassTaxonomy",
    "ConditionTag",
    "PointScan",
    "PTv3Lite",
    "PTv3LiteConfig",
    "__version__",
]
