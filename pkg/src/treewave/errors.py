"""Exception hierarchy shared by the whole package."""


class TreewaveError(Exception):
    pass


class ValidationError(TreewaveError, ValueError):
    """Bad input: malformed files, invalid trees, inconsistent shapes."""


class NetworkFormatError(ValidationError):
    def __init__(self, message, lineno=None):
        self.lineno = lineno
        if lineno is not None:
            message = f"line {lineno}: {message}"
        super().__init__(message)


class NumericalError(TreewaveError, RuntimeError):
    """A solver could not produce a trustworthy result."""


class CFLError(NumericalError):
    pass
