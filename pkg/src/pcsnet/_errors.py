"""Exception types shared across the package.

Every error raised on bad input carries a short machine-readable ``code``
(``"k-too-large"``, ``"degenerate-extent"``, ...) so callers and the CLI can
branch on it without parsing messages.
"""


class PcsError(ValueError):
    """Base class for all package errors."""

    exit_code = 2

    def __init__(self, code, message=None):
        self.code = code
        super().__init__(f"{code}: {message}" if message else code)


class DataError(PcsError):
    """Invalid or inconsistent input data (shapes, counts, files)."""


class FormatError(DataError):
    """Malformed cloud or mesh file."""

    def __init__(self, code, message=None, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}" if message else f"line {line}"
        super().__init__(code, message)


class NumericalError(PcsError):
    """Non-finite values or failed numerical checks."""

    exit_code = 3


class ShapeError(DataError):
    """Operand shapes are incompatible for a tensor primitive."""

    def __init__(self, op, *shapes):
        joined = " vs ".join(str(tuple(s)) for s in shapes)
        super().__init__("shape-mismatch", f"{op}: {joined}")
