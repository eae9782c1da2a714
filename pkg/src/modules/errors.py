"""Exception types shared by the library and the command line script."""


class VoiError(Exception):
    """Base class of every error raised on purpose by this package."""

    # Process exit code used by the command line script.
    EXIT_CODE = 2


class ConfigError(VoiError):
    """Invalid settings or command line usage."""

    EXIT_CODE = 1


class DomainError(VoiError, ValueError):
    """A numeric argument is outside of its valid domain."""

    EXIT_CODE = 2


class DataError(VoiError, ValueError):
    """Input data can not be parsed or fails validation.

    Args:
        message (str): Human readable description.
        line (int, optional): 1-based line number of the offending row in the source file.
    """

    EXIT_CODE = 2

    def __init__(self, message, line=None) -> None:
        self.line = line
        if line is not None:
            message = f'line {line}: {message}'
        super().__init__(message)


class GuardError(VoiError):
    """A numerical guard tripped (enumeration too large, oracle deviation too big)."""

    EXIT_CODE = 3
