"""Exception hierarchy shared by every chronosim module."""


class ChronosimError(Exception):
    """Base class for simulator errors."""


class PastEvent(ChronosimError):
    """An event was scheduled before the current simulation time."""


class BadInterval(ChronosimError, ValueError):
    pass


class UnknownNetwork(ChronosimError):
    pass


class Divergent(ChronosimError):
    """Response-time iteration exceeded the relative deadline."""

    def __init__(self, task, bound):
        super().__init__(f"task {task!r}: response time exceeds deadline (reached {bound})")
        self.task = task
        self.bound = bound


class Diverged(ChronosimError):
    """Plant state blew up during integration."""


class SampleOffGrid(ChronosimError):
    pass


class NonFinite(ChronosimError, ValueError):
    pass


class GridMismatch(ChronosimError, ValueError):
    pass


class ParseError(ChronosimError):
    def __init__(self, msg, line=None, column=None):
        where = f" (line {line}, column {column})" if line is not None else ""
        super().__init__(msg + where)
        self.line = line
        self.column = column


class ValidationError(ChronosimError):
    """Scenario failed a named validation rule."""

    def __init__(self, rule, msg):
        super().__init__(f"{rule}: {msg}")
        self.rule = rule


class UnknownParameter(ChronosimError, KeyError):
    def __str__(self):
        return str(self.args[0]) if self.args else "unknown parameter"


class MalformedTrace(ChronosimError, ValueError):
    pass


class MissingPosition(ValidationError):
    def __init__(self, msg):
        super().__init__("MissingPosition", msg)


class DuplicateCanId(ValidationError):
    def __init__(self, msg):
        super().__init__("DuplicateCanId", msg)
