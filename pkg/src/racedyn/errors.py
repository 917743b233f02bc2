"""Exception types shared across the package.

Errors that callers are expected to branch on get their own class; plain
ValueError is reserved for constructor and argument validation.
"""

from __future__ import annotations


class TelemetryError(ValueError):
    """Base class for telemetry file problems."""


class SchemaError(TelemetryError):
    """A telemetry file does not match the expected column schema."""


class OrderingError(TelemetryError):
    """Timestamps in a telemetry file are not strictly increasing."""

    def __init__(self, row: int, message: str):
        super().__init__(message)
        self.row = row


class DataError(TelemetryError):
    """A telemetry file contains a non-finite or unparsable value."""

    def __init__(self, row: int, message: str):
        super().__init__(message)
        self.row = row


class DivergedError(RuntimeError):
    """A rollout left the numerically sane region."""

    def __init__(self, step: int, message: str = ""):
        super().__init__(message or f"state diverged at step {step}")
        self.step = step


class OffTrackError(RuntimeError):
    """A closed-loop driver left the track beyond recovery."""

    def __init__(self, step: int, message: str = ""):
        super().__init__(message or f"vehicle left the track at step {step}")
        self.step = step


class TrainingDivergedError(RuntimeError):
    """Training loss became non-finite."""

    def __init__(self, step: int, message: str = ""):
        super().__init__(message or f"loss became non-finite at update {step}")
        self.step = step


class CheckpointError(ValueError):
    """A checkpoint file is malformed or from an unknown format version."""
