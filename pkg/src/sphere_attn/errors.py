"""Exception types shared across the library.

All of these derive from built-in exception categories so callers that do
not care about the distinction can simply catch ValueError / ArithmeticError.
"""


class SphereAttnError(Exception):
    """Base class so the CLI can catch everything the library raises."""


class ShapeError(SphereAttnError, ValueError):
    """An array argument has the wrong rank or an inconsistent dimension."""


class ConfigError(SphereAttnError, ValueError):
    """A configuration object violates its own consistency rules."""


class FormatError(SphereAttnError, ValueError):
    """A serialized file has a bad magic number, header, or truncated body."""


class SizeError(SphereAttnError, ValueError):
    """An input is too large for the code path it was handed to."""


class NumericError(SphereAttnError, ArithmeticError):
    """A computation produced non-finite values."""
