"""Experiment machinery for acoustic model training from ultrasound and text.

Subpackages cover raw ultrasound IO, PCA frame compression, linguistic
feature extraction, acoustic target preparation, MLP training, objective
evaluation, and transducer misalignment diagnostics, orchestrated by a
run-directory pipeline and CLI.
"""

__version__ = "0.1.0"

from .errors import (
    ArgumentError,
    ConfigError,
    DataError,
    FormatError,
    MetadataError,
    StageError,
    TrainingDiverged,
    UltraTtsError,
)

__all__ = [
    "ArgumentError",
    "ConfigError",
    "DataError",
    "FormatError",
    "MetadataError",
    "StageError",
    "TrainingDiverged",
    "UltraTtsError",
    "__version__",
]
