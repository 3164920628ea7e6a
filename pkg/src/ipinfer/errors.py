"""Exception hierarchy shared across the package.

The CLI maps these onto its exit-code contract: configuration and usage
problems exit 2, data insufficiency exits 3, numerical failures exit 4.
"""


class IpinferError(Exception):
    """Base class for all package errors."""


class ConfigError(IpinferError):
    """Invalid configuration, parameters, or usage."""


class DimensionError(IpinferError):
    """Shape or width mismatch between inputs."""


class DataError(IpinferError):
    """The data cannot support the requested computation."""


class UnusableDatasetError(DataError):
    """No usable rows survive construction (for example, no complete rows)."""


class NumericError(IpinferError):
    """Numerical failure during estimation."""


class RankDeficiencyError(NumericError):
    """A matrix that must be invertible is singular."""


class ConvergenceError(NumericError):
    """An iterative solver failed to converge."""


class FitError(NumericError):
    """A model fit failed (degenerate covariance, impossible resample, ...)."""
