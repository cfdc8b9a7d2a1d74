"""Exception taxonomy shared across the package."""


class SkorofieldError(Exception):
    """Base class for all package errors."""


class ArgumentError(SkorofieldError, ValueError):
    """Malformed argument: wrong dimension, empty input, off-lattice point."""


class PreconditionError(SkorofieldError, ValueError):
    """A documented operation precondition does not hold."""


class ConfigError(SkorofieldError, ValueError):
    """Invalid configuration value or exponential-blowup guard tripped."""


class DegenerateDistanceError(SkorofieldError):
    """Quasi-distance is identically zero on the lattice and cannot be normalized."""


class DegenerateWindowError(SkorofieldError):
    """The requested window is below lattice resolution (no usable pairs)."""


class FitError(SkorofieldError):
    """Too few or unusable points for a least-squares fit."""


class CovarianceError(SkorofieldError):
    """Covariance table is not symmetric positive semidefinite up to jitter."""


class ModelError(SkorofieldError):
    """Field model misuse, e.g. partial sums over a non-centered base."""


class EstimationError(SkorofieldError):
    """Monte Carlo estimation request cannot produce a meaningful answer."""


class DomainError(SkorofieldError, ValueError):
    """Numeric argument outside the validity domain of a bound formula."""


class NoFiniteBoundError(SkorofieldError):
    """Every probed point of an optimization domain yields an infinite bound."""


class NotInGlsError(SkorofieldError):
    """A family of random variables has no finite moment at the smallest grid exponent."""


class DegenerateKeyEstimateError(SkorofieldError):
    """The estimated tail quasi-distance is identically zero.

    Usually means the threshold u0 exceeds the field's increment range;
    lower u0 or switch to a normalized partial-sum model.
    """


class ResourceCapError(SkorofieldError):
    """Estimated cost exceeds the configured resource cap; rerun with force."""
