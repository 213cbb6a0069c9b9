"""Exception types raised across gridmap."""


class GridmapError(Exception):
    """Base class for all gridmap errors."""


class InvalidGeometry(GridmapError):
    pass


class ParseError(GridmapError):
    """A record could not be parsed; the message names the record and field."""


class DuplicateId(GridmapError):
    pass


class DanglingReference(GridmapError):
    pass


class SelfLoop(GridmapError):
    pass


class ConfigError(GridmapError):
    """Bad configuration. ``key`` holds the offending key when known."""

    def __init__(self, message, key=None):
        super().__init__(message)
        self.key = key
