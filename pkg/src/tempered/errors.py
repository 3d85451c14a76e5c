"""Exception types shared across the package."""


class TemperedError(Exception):
    """Base class for errors raised by this package."""


class CapExceeded(TemperedError, ValueError):
    """A basis index or truncation order exceeds the configured cap."""


class PrecisionError(TemperedError, ValueError):
    """An invalid precision setting was requested."""


class NonFiniteError(TemperedError, ArithmeticError):
    """A computation produced an infinite or NaN value."""


class BackendError(TemperedError, ValueError):
    """An operation was requested on an input it does not support."""


class GridOverflow(TemperedError, ValueError):
    """A simulation grid is malformed or too large."""
