"""Shared exception types with their CLI exit-code mapping."""


class FeatloomError(Exception):
    """Base class for all featloom errors."""

    exit_code = 1


class ConfigError(FeatloomError):
    """Invalid or inconsistent run configuration."""

    exit_code = 2


class ProviderError(FeatloomError):
    """Language-model or embedding provider failure."""

    exit_code = 3


class TranscriptExhausted(ProviderError):
    """Replay transcript has no responses left."""


class DataError(FeatloomError):
    """Malformed dataset, table, or run-state artifact."""

    exit_code = 4
