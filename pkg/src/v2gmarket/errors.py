"""Exception types shared across the package."""


class V2gMarketError(Exception):
    """Base class for every error raised by this package."""


class ValidationError(V2gMarketError):
    """Malformed or inconsistent input data. The CLI maps this to exit code 2."""


class IncompleteSeriesError(ValidationError):
    """A price file does not cover every half-hour period of the trading day."""

    def __init__(self, message: str, missing: tuple[int, ...] = ()):
        super().__init__(message)
        self.missing = tuple(missing)


class CalibrationError(V2gMarketError):
    """No scaling factor can satisfy the requested balancing revenue target."""
