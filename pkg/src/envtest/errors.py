"""Exception types raised by :mod:`envtest`.

All of them subclass :class:`ValueError` so callers that only care about
"bad input" can keep catching that.
"""


class InvalidInputError(ValueError):
    """Input data violates a precondition (non-finite values, wrong shape, ...)."""


class InvalidArgumentError(ValueError):
    """A parameter is outside its admissible range."""


class DegenerateInputError(ValueError):
    """The data make the requested quantity undefined (e.g. zero variance)."""


class ConfigurationError(ValueError):
    """An experiment or test configuration cannot be run as specified."""
