"""Exception hierarchy shared by the pipeline stages."""


class AirparkError(Exception):
    """Base class for all package errors."""


class InputError(AirparkError, ValueError):
    """Invalid input data or arguments (maps to CLI exit code 2)."""


class ParseError(InputError):
    """Malformed CSV content; ``line`` is the 1-indexed physical line."""

    def __init__(self, line: int, message: str):
        super().__init__(f"line {line}: {message}")
        self.line = line


class TrainingError(AirparkError):
    """Training diverged (non-finite loss)."""

    def __init__(self, epoch: int, batch: int, message: str = "non-finite loss"):
        super().__init__(f"{message} at epoch {epoch}, batch {batch}")
        self.epoch = epoch
        self.batch = batch


class CheckpointError(AirparkError):
    """Checkpoint file could not be decoded."""


class CheckpointFormatError(CheckpointError):
    """Bad magic bytes or malformed section table."""


class CheckpointVersionError(CheckpointError):
    """Checkpoint written by an unsupported format version."""


class TruncatedCheckpointError(CheckpointError):
    """File ended before all declared bytes were read."""
