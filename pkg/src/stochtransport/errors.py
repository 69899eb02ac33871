"""Exception and warning types shared by every module."""


class StochTransportError(Exception):
    pass


class ConfigError(StochTransportError, ValueError):
    """Invalid parameters, labels, indices or configuration files."""


class NumericsError(StochTransportError, ArithmeticError):
    """A computation produced a non-finite value.

    ``where`` carries the offending point or step index when known.
    """

    def __init__(self, message, where=None):
        super().__init__(message)
        self.where = where


class TruncationWarning(UserWarning):
    """Box truncation may have lost a non-negligible part of the mass."""
