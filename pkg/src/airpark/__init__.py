"""Percentile-based NO2 alert labeling, small from-scratch forecasters and tariff scoring."""
from ._kernels import BACKEND
from .errors import (AirparkError, CheckpointError, CheckpointFormatError, CheckpointVersionError, InputError,
                     ParseError, TrainingError, TruncatedCheckpointError)
from .labeling import RULE_I, RULE_II, AlertLevel, Block, RuleSpec

__version__ = "0.1.0"

__all__ = [
    "BACKEND", "AirparkError", "CheckpointError", "CheckpointFormatError", "CheckpointVersionError", "InputError",
    "ParseError", "TrainingError", "TruncatedCheckpointError", "RULE_I", "RULE_II", "AlertLevel", "Block",
    "RuleSpec", "__version__",
]
