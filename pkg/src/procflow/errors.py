"""Exception hierarchy shared across procflow."""


class ProcflowError(Exception):
    """Base class for all procflow errors."""


class DataError(ProcflowError, ValueError):
    """Malformed or inconsistent process data (bad CSV, invalid set, bad index)."""


class NumericError(ProcflowError, ArithmeticError):
    """A numerical routine produced a non-finite value or failed to converge."""
