"""Exception hierarchy shared by every module."""


class AilsrsError(Exception):
    pass


class InvalidArgument(AilsrsError, ValueError):
    pass


class ProtocolViolation(AilsrsError, RuntimeError):
    """Raised when an environment is stepped after its episode ended."""


class NumericalFailure(AilsrsError, ArithmeticError):
    pass


class FileFormatError(AilsrsError, ValueError):
    """Base for parse, version and validation errors of on-disk artifacts."""


class ParseError(FileFormatError):
    pass


class VersionError(FileFormatError):
    pass


class DimensionError(FileFormatError, InvalidArgument):
    pass


class InvariantViolation(FileFormatError):
    def __init__(self, message, episode=None, step=None):
        super().__init__(message)
        self.episode = episode
        self.step = step
