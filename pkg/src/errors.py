"""
Exception hierarchy for the MVAM package.

Every error also derives from ValueError so callers that catch the builtin
keep working.
"""


class MVAMError(ValueError):
    """Base class for all package errors."""


class ShapeError(MVAMError):
    """Tensor operands have incompatible shapes."""


class ConfigError(MVAMError):
    """A configuration value is missing or out of range."""


class DataError(MVAMError):
    """A corpus, vocabulary or embedding file is malformed."""


class NumericError(MVAMError):
    """A computation produced a non-finite value or an invalid graph state."""


class MetricsError(MVAMError):
    """A metric is undefined for the given predictions."""


class CheckpointError(MVAMError):
    """A checkpoint cannot be read or does not match the data it is used with."""
