"""Exception types shared across the package."""


class DTrackError(Exception):
    """Base class for all package errors."""


class ConfigError(DTrackError, ValueError):
    """An algorithm, workload or grid configuration is invalid."""


class StreamExhausted(DTrackError):
    """The arrival source ended before the threshold was reached."""

    def __init__(self, consumed: int, needed: int):
        super().__init__(f"arrival stream ended after {consumed} items; {needed} needed")
        self.consumed = consumed
        self.needed = needed


class InvalidPlayerId(DTrackError, ValueError):
    """A player id outside [0, k) was produced or read."""


class ParseError(DTrackError, ValueError):
    """A trace or probability file could not be parsed."""

    def __init__(self, path, lineno: int, message: str):
        super().__init__(f"{path}:{lineno}: {message}")
        self.path = path
        self.lineno = lineno


class EmptySample(DTrackError, ValueError):
    """Distribution estimation was attempted with zero observed items."""
