"""Shared exception types."""


class ConfigError(ValueError):
    """Invalid or inconsistent run configuration."""


class CheckpointError(RuntimeError):
    """Unreadable or incompatible checkpoint / buffer file."""


class TrainingFault(RuntimeError):
    """Training hit a non-finite loss or gradient; last good checkpoint kept."""
