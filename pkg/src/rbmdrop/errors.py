"""Error types shared across the package."""


class RbmDropError(Exception):
    """Base class for package-specific failures."""


class DataFormatError(RbmDropError):
    """A file did not match its expected binary layout."""


class DivergenceError(RbmDropError):
    """Training blew up: non-finite values or runaway reconstruction error."""
