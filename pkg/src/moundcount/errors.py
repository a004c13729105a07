"""Exception hierarchy shared by the library and the command line."""


class MoundCountError(Exception):
    """Base class for all package errors."""


class ValidationError(MoundCountError, ValueError):
    """Invalid argument, configuration or value range.  CLI exit code 1."""


class DataError(MoundCountError):
    """Malformed or inconsistent input data on disk.  CLI exit code 2."""


class LabelParseError(DataError):
    def __init__(self, message, line_number=None, path=None):
        self.line_number = line_number
        self.path = path
        where = ""
        if path is not None:
            where += f"{path}:"
        if line_number is not None:
            where += f"{line_number}:"
        super().__init__(f"{where} {message}" if where else message)


class SingularSystemError(ValidationError):
    """Raised when the unregularized normal equations cannot be solved."""
