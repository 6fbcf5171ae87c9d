# empbase/errors.py
"""
This module implements the exceptions raised by empbase.

The exceptions subclass the builtin types that a caller would expect
(`ValueError` for bad input, `ArithmeticError` for numeric failures) so
code that catches those keeps working. The command line maps each family
to an exit code.
"""

USAGE_EXIT = 1
DATA_EXIT = 2
NUMERIC_EXIT = 3


class EmpbaseError(Exception):
    """Base class of all empbase errors."""

    exit_code = DATA_EXIT


class ConfigError(EmpbaseError, ValueError):
    """Invalid configuration: unknown keys, bad dims, bad weights."""


class DataError(EmpbaseError, ValueError):
    """Invalid input data: records, lexicons, vectors, features."""


class ShapeError(EmpbaseError, ValueError):
    """Operands with incompatible shapes."""

    def __init__(self, op, *shapes):
        self.op = op
        self.shapes = shapes
        shape_text = " and ".join(str(tuple(shape)) for shape in shapes)
        super().__init__(f"{op}: incompatible shapes {shape_text}")


class NumericError(EmpbaseError, ArithmeticError):
    """Non-finite losses or gradients."""

    exit_code = NUMERIC_EXIT
