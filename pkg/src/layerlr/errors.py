"""Shared exception types."""


class ConfigError(ValueError):
    """Invalid specification or configuration (shape mismatch, bad field, ...)."""


class SnapshotError(ValueError):
    """Snapshot bytes could not be decoded (bad magic, truncation, ...)."""


class DataError(ValueError):
    """Dataset file could not be parsed or is inconsistent."""


class AggregationError(ValueError):
    """Result aggregation found incomplete seed coverage."""
