"""Exception hierarchy shared across the package."""


class FtsregError(Exception):
    """Base class for all package errors."""


class ConfigError(FtsregError, ValueError):
    """Invalid configuration or argument outside its documented range."""


class InvalidBandwidthError(ConfigError):
    """A bandwidth was not strictly positive."""


class DataError(FtsregError, ValueError):
    """Input data is malformed or cannot support the requested computation."""


class EmptyWindowError(DataError):
    """No curve has a design point inside the smoothing window."""


class NoFeasibleBandwidthError(DataError):
    """Every bandwidth of the grid leads to an empty window."""


class DegenerateIncrementsError(DataError):
    """Mean squared increments vanish, so the log-ratio is undefined."""


class NumericalError(FtsregError, ArithmeticError):
    """A numerical routine failed (e.g. a non positive definite covariance)."""


class RunFailedError(FtsregError):
    """Too many Monte Carlo replications failed."""
