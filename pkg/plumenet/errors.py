"""
Structured errors raised by the plumenet library.

Library code raises, command handlers catch and map to exit codes
(1 = usage, 2 = data / validation).
"""
from typing import Any, Optional


class PlumeNetError(Exception):
    """Base class for every error raised by plumenet"""

    exit_code = 2


class ShapeError(PlumeNetError, ValueError):
    """An operand has the wrong extent along a named dimension"""

    def __init__(self, op: str, dimension: str, expected: Any, actual: Any):
        self.op = op
        self.dimension = dimension
        self.expected = expected
        self.actual = actual
        super().__init__(f"{op}: {dimension} mismatch (expected {expected}, got {actual})")


class ConfigError(PlumeNetError, ValueError):
    """Invalid or unknown configuration field"""

    def __init__(self, field: str, reason: str):
        self.field = field
        self.reason = reason
        super().__init__(f"config field '{field}': {reason}")


class PatchFormatError(PlumeNetError, ValueError):
    """A patch / mask / checkpoint file pair failed validation"""

    def __init__(self, path: Any, reason: str):
        self.path = str(path)
        self.reason = reason
        super().__init__(f"{self.path}: {reason}")


class BandError(PlumeNetError, ValueError):
    """A required spectral band is missing, or the band set is invalid"""

    def __init__(self, band: str, reason: Optional[str] = None):
        self.band = band
        super().__init__(reason or f"missing band {band}")


class DataError(PlumeNetError, ValueError):
    """Corpus / manifest / sampling precondition failed"""


class CheckpointError(PlumeNetError, ValueError):
    """Checkpoint cannot be loaded or does not match the data"""


class TrainingError(PlumeNetError, RuntimeError):
    """Training aborted (non-finite loss and similar)"""

    def __init__(self, epoch: int, batch: int, reason: str):
        self.epoch = epoch
        self.batch = batch
        self.reason = reason
        super().__init__(f"epoch {epoch}, batch {batch}: {reason}")


class UsageError(PlumeNetError):
    """Bad command-line usage"""

    exit_code = 1

    def __init__(self, message: str, usage: Optional[str] = None):
        self.usage = usage
        super().__init__(message)
