"""Exception types shared across the package."""


class ParameterError(ValueError):
    """A parameter is outside its documented domain."""


class RangeError(ValueError):
    """A value does not fit the configured fixed-point range."""


class ProtocolError(RuntimeError):
    """A node-side protocol rule was violated (triple reuse, missing share, ...)."""


class IngestError(ValueError):
    """A dataset file could not be ingested at all (as opposed to per-line rejects)."""
