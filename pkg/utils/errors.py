"""
Exception hierarchy shared by all packages.

CLI exit codes: 1 for ConfigError, ValidationError, ContractError, ShapeError,
NumericError, UndefinedMetricError and CheckpointError; 2 for OSError and
TransportError.
"""


class KCDError(Exception):
    """Base class of all errors raised by this repository."""


class ConfigError(KCDError, ValueError):
    pass


class ValidationError(KCDError, ValueError):
    pass


class ParseError(ValidationError):
    def __init__(self, message, line_no=None):
        self.line_no = line_no
        if line_no is not None:
            message = f"line {line_no}: {message}"
        super().__init__(message)


class ContractError(KCDError, ValueError):
    pass


class ShapeError(KCDError, ValueError):
    def __init__(self, message, shape_a=None, shape_b=None):
        self.shape_a = None if shape_a is None else tuple(shape_a)
        self.shape_b = None if shape_b is None else tuple(shape_b)
        if shape_a is not None or shape_b is not None:
            message = f"{message} (got {self.shape_a} and {self.shape_b})"
        super().__init__(message)


class NumericError(KCDError, ArithmeticError):
    pass


class UndefinedMetricError(KCDError, ValueError):
    pass


class CheckpointError(KCDError, ValueError):
    pass


class TransportError(KCDError, IOError):
    pass


def exit_code_of(err: BaseException) -> int:
    if isinstance(err, TransportError) or (isinstance(err, OSError) and not isinstance(err, KCDError)):
        return 2
    if isinstance(err, KCDError):
        return 1
    return 1
