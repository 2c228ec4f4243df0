"""Exception hierarchy shared by every kedformer module."""


class KedformerError(Exception):
    """Base class for all library errors."""


class DimensionError(KedformerError, ValueError):
    """Operand shapes are incompatible."""


class ConfigurationError(KedformerError, ValueError):
    """A hyperparameter or argument is outside its valid range."""


class NumericError(KedformerError, FloatingPointError):
    """A NaN or Inf appeared where finite values are required."""


class IngestionError(KedformerError, ValueError):
    """A data file could not be parsed."""


class OrderingError(IngestionError):
    """Timestamps are not strictly increasing."""


class InsufficientDataError(KedformerError, ValueError):
    """A series is too short for the requested windows or splits."""


class IncompatibleCheckpointError(KedformerError, ValueError):
    """A checkpoint does not match the requested configuration or data."""
