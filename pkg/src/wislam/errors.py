"""Exception hierarchy shared across the package."""


class WislamError(Exception):
    """Base class for all package errors."""


class InvalidInputError(WislamError, ValueError):
    """An argument violates an operation's precondition."""


class DegenerateInputError(WislamError, ValueError):
    """Input is well-formed but carries no usable signal (e.g. an all-zero channel)."""


class DegenerateGeometryError(WislamError, ValueError):
    """Geometry makes a measurement undefined (e.g. a landmark at the sensor origin)."""


class DataError(WislamError):
    """A trace or config file is missing or malformed."""


class NumericalError(WislamError):
    """The solver could not produce a finite result."""
