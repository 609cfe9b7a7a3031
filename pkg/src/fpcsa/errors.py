"""Exception hierarchy shared by every fpcsa module."""


class FpcsaError(Exception):
    """Base class for all library errors."""


class UsageError(FpcsaError, ValueError):
    """An argument is incompatible with the object it is applied to."""


class DomainError(FpcsaError, ValueError):
    """A mathematical operation is undefined for its input (e.g. inverse of zero)."""


class ConfigurationError(FpcsaError, ValueError):
    """Invalid construction parameters (sketch shape, scheme bounds, flags)."""


class MergeError(FpcsaError, ValueError):
    """Two sketches cannot be merged; ``parameter`` names the first mismatch."""

    def __init__(self, parameter, left, right):
        self.parameter = parameter
        super().__init__(f"cannot merge sketches: {parameter} differs ({left!r} != {right!r})")


class FormatError(FpcsaError, ValueError):
    """Malformed serialized sketch or stream file.

    ``offset`` is a byte offset for binary input and ``line`` a 1-based line
    number for text input; whichever does not apply is ``None``.
    """

    def __init__(self, message, offset=None, line=None):
        self.offset = offset
        self.line = line
        where = ""
        if offset is not None:
            where = f" (at byte {offset})"
        elif line is not None:
            where = f" (line {line})"
        super().__init__(message + where)


class ResourceLimitError(FpcsaError, MemoryError):
    """A request would exceed a fixed memory budget."""


class ExperimentError(FpcsaError, RuntimeError):
    """A Monte Carlo run stopped early; ``completed`` trials finished."""

    def __init__(self, message, completed):
        self.completed = completed
        super().__init__(f"{message} after {completed} completed trials")
