class SetClassError(Exception):
    """Base class for all errors raised by setclass."""


class SetDataError(SetClassError, ValueError):
    """Ingestion or validation failure of a set / collection."""


class DimensionError(SetClassError, ValueError):
    """Requested dimension is out of range or shapes disagree."""


class DegenerateError(SetClassError, ValueError):
    """Input carries no usable information (zero variance, no positive eigenvalue, ...)."""
