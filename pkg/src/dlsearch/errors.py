"""Exception hierarchy shared by every module."""


class DLSError(Exception):
    """Base class for all errors raised by dlsearch."""


class DimensionMismatchError(DLSError, ValueError):
    pass


class EmptyInputError(DLSError, ValueError):
    pass


class FormatError(DLSError, ValueError):
    """A file does not follow its documented layout."""

    def __init__(self, message, path=None, lineno=None):
        where = ""
        if path is not None:
            where = f"{path}"
            if lineno is not None:
                where += f":{lineno}"
            where += ": "
        super().__init__(where + message)
        self.path = path
        self.lineno = lineno


class UnsupportedVersionError(FormatError):
    pass


class ChecksumError(FormatError):
    pass
