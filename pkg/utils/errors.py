"""Exception hierarchy shared by every module.

Check failures are verdicts inside a CheckReport, not exceptions; these
classes cover bad inputs, bad model parameters and numerical breakdowns.
"""


class IndivarError(Exception):
    """Base class for all errors raised by the toolkit"""


class InputError(IndivarError, ValueError):
    """Bad call-time input: point/space mismatch, out-of-range value, bad file"""


class ConstructionError(IndivarError, ValueError):
    """Model or correlation parameters outside the catalog restrictions"""


class NumericalError(IndivarError, ArithmeticError):
    """Factorization failure, series non-convergence, singular systems"""


class EnumerationLimitError(IndivarError):
    """Exact enumeration or LP requested beyond its supported size"""


class ConfigError(IndivarError):
    """Run config or model spec could not be parsed"""

    def __init__(self, message: str, line: int = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
