"""Exception hierarchy shared across the package."""


class FovlabError(Exception):
    """Base class for errors raised by fovlab."""


class DataError(FovlabError):
    """Missing or malformed files, schemas, or dataset layouts."""


class NumericError(FovlabError):
    """Numerical failure (non-finite loss, diverged optimization)."""
