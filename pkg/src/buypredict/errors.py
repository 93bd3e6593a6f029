"""Shared exception types."""


class BuyPredictError(Exception):
    """Base class for all buypredict errors."""


class ConfigError(BuyPredictError):
    """A configuration value, file, or combination is invalid."""


class DataError(BuyPredictError):
    """Input data cannot be processed as required."""


class FitError(DataError):
    """Training data cannot produce a valid model."""


class ArtifactError(BuyPredictError):
    """A persisted model artifact is missing, corrupt, or incompatible."""
