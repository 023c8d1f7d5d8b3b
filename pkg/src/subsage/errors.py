"""Exception types shared across the package."""


class SubsageError(Exception):
    """Base class for all package errors."""


class InputError(SubsageError):
    """Bad input data, file, schema, or mismatched model/data shapes."""


class NumericalError(SubsageError):
    """A numerical procedure failed (degenerate bootstrap, diverging BCa)."""
