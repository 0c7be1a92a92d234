"""Package-level exception types."""


class ConfigError(ValueError):
    """Invalid configuration file, flag, or serialized payload."""


class NumericError(RuntimeError):
    """A numeric procedure failed: contraction violated, non-finite
    parameters, or an iterative solver ran out of budget."""


class InsufficientDataError(ValueError):
    """A fit was requested from data that cannot determine the solution."""
