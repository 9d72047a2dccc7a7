"""Exception types shared across the package."""


class RydblockError(Exception):
    """Base class for all package errors."""


class ConfigurationError(RydblockError, ValueError):
    """Missing or inconsistent input data (defect channel, config key, ...)."""


class InvariantError(RydblockError, ValueError):
    """A domain invariant was violated by the caller."""


class AmbiguityError(RydblockError):
    """A selection could not be made without an arbitrary tie-break."""


class NumericalError(RydblockError, ArithmeticError):
    """Integration, quadrature or fit failed to converge."""


class StaleCacheError(RydblockError):
    """A persisted cache was built with different parameters."""
