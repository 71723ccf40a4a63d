"""Exception hierarchy shared across the package.

Every data-dependent failure derives from :class:`DataError` so callers
(notably the CLI) can distinguish bad input from usage mistakes or bugs.
"""


class HallurateError(Exception):
    """Base class for all package errors."""


class DataError(HallurateError):
    """Invalid or inconsistent input data."""
