"""Exception types shared across the package."""


class PrefElicitError(Exception):
    """Base class for all errors raised by this package."""


class DataValidationError(PrefElicitError):
    """Malformed or inconsistent input data (bad dimensions, files, params)."""


class NumericalFailure(PrefElicitError):
    """A numerical routine stalled or produced an uncertifiable result."""


class InfeasibleHistoryError(PrefElicitError):
    """The recorded responses are inconsistent beyond the noise budget."""
