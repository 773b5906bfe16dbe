"""Exception hierarchy. Each class carries the CLI exit code it maps to."""


class CookCNNError(Exception):
    exit_code = 1


class ShapeError(CookCNNError, ValueError):
    exit_code = 2


class ConfigError(CookCNNError, ValueError):
    exit_code = 2


class FormatError(CookCNNError):
    """Malformed checkpoint or stats file. ``offset`` is the byte position, if known."""

    exit_code = 2

    def __init__(self, message, offset=None):
        if offset is not None:
            message = f"{message} (at byte offset {offset})"
        super().__init__(message)
        self.offset = offset


class UnsupportedVersionError(FormatError):
    pass


class DataError(CookCNNError):
    exit_code = 3


class ManifestError(DataError):
    pass


class DecodeError(DataError):
    def __init__(self, message, offset=None):
        if offset is not None:
            message = f"{message} (at byte offset {offset})"
        super().__init__(message)
        self.offset = offset


class NumericError(CookCNNError, ArithmeticError):
    exit_code = 4

    def __init__(self, message, epoch=None):
        super().__init__(message)
        self.epoch = epoch


class StateError(CookCNNError, RuntimeError):
    pass
